/*
 * Copyright 2026 The semland Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Point-mass quadrotor with Euler-angle attitude. Rates integrate directly
// into the angles and thrust is mass-normalized along the body z axis.
//
//   p' = v
//   v' = R(att) e3 T - g e3
//   att' = rate_cmd
//
// The model is templated on the scalar so the same code path serves the
// simulator (double) and the MPC linearization (forward-mode autodiff).

#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

namespace semland {

inline constexpr int kStateDim = 9;
inline constexpr int kInputDim = 4;

template <typename Scalar>
using StateVec = Eigen::Matrix<Scalar, kStateDim, 1>;
template <typename Scalar>
using InputVec = Eigen::Matrix<Scalar, kInputDim, 1>;

using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;
using InputMatrix = Eigen::Matrix<double, kStateDim, kInputDim>;

struct DynamicsParams {
    double g{9.81};
    double thrust_min{2.0};
    double thrust_max{20.0};
    double rate_max{3.0};
    double dt{0.05};
    double att_limit{1.2};
    /// First-order actuator lag applied by the simulator only; 0 disables it.
    double tau_act{0.0};

    [[nodiscard]] bool valid() const {
        return 0.0 <= thrust_min && thrust_min < g && g < thrust_max && dt > 0.0 &&
               rate_max > 0.0 && att_limit > 0.0 && tau_act >= 0.0;
    }
};

struct State {
    Eigen::Vector3d p{Eigen::Vector3d::Zero()};
    Eigen::Vector3d v{Eigen::Vector3d::Zero()};
    /// roll, pitch, yaw
    Eigen::Vector3d att{Eigen::Vector3d::Zero()};

    [[nodiscard]] StateVec<double> vec() const {
        StateVec<double> x;
        x << p, v, att;
        return x;
    }
    static State from_vec(const StateVec<double>& x) {
        return State{x.segment<3>(0), x.segment<3>(3), x.segment<3>(6)};
    }
    bool operator==(const State&) const = default;
};

struct ControlInput {
    Eigen::Vector3d rate_cmd{Eigen::Vector3d::Zero()};
    double thrust_cmd{0.0};

    [[nodiscard]] InputVec<double> vec() const {
        InputVec<double> u;
        u << rate_cmd, thrust_cmd;
        return u;
    }
    static ControlInput from_vec(const InputVec<double>& u) {
        return ControlInput{u.head<3>(), u(3)};
    }
    static ControlInput hover(const DynamicsParams& params) {
        return ControlInput{Eigen::Vector3d::Zero(), params.g};
    }
    bool operator==(const ControlInput&) const = default;
};

/// ZYX Euler rotation, body to world: R = Rz(yaw) Ry(pitch) Rx(roll).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_matrix(const Eigen::Matrix<Scalar, 3, 1>& att) {
    using std::cos;
    using std::sin;
    const Scalar cr = cos(att(0)), sr = sin(att(0));
    const Scalar cp = cos(att(1)), sp = sin(att(1));
    const Scalar cy = cos(att(2)), sy = sin(att(2));
    Eigen::Matrix<Scalar, 3, 3> R;
    R << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
         sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
         -sp,     cp * sr,                cp * cr;
    return R;
}

inline Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& att) {
    return rotation_matrix<double>(att);
}

template <typename Scalar>
StateVec<Scalar> state_derivative(const StateVec<Scalar>& x, const InputVec<Scalar>& u,
                                  const DynamicsParams& params) {
    using std::cos;
    using std::sin;
    const Scalar cr = cos(x(6)), sr = sin(x(6));
    const Scalar cp = cos(x(7)), sp = sin(x(7));
    const Scalar cy = cos(x(8)), sy = sin(x(8));
    // third column of R, i.e. R e3
    const Scalar zx = cy * sp * cr + sy * sr;
    const Scalar zy = sy * sp * cr - cy * sr;
    const Scalar zz = cp * cr;

    StateVec<Scalar> dx;
    dx.template segment<3>(0) = x.template segment<3>(3);
    dx(3) = zx * u(3);
    dx(4) = zy * u(3);
    dx(5) = zz * u(3) - Scalar(params.g);
    dx.template segment<3>(6) = u.template head<3>();
    return dx;
}

/// One RK4 step with zero-order-hold input. Roll and pitch are clamped to
/// +-att_limit afterwards. The input is used as given; clamp it first.
template <typename Scalar>
StateVec<Scalar> step(const StateVec<Scalar>& x, const InputVec<Scalar>& u,
                      const DynamicsParams& params, double dt) {
    const Scalar h(dt);
    const StateVec<Scalar> k1 = state_derivative<Scalar>(x, u, params);
    const StateVec<Scalar> k2 = state_derivative<Scalar>(x + (h / Scalar(2)) * k1, u, params);
    const StateVec<Scalar> k3 = state_derivative<Scalar>(x + (h / Scalar(2)) * k2, u, params);
    const StateVec<Scalar> k4 = state_derivative<Scalar>(x + h * k3, u, params);
    StateVec<Scalar> next = x + (h / Scalar(6)) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    for (int i = 6; i < 8; ++i) {
        if (next(i) > Scalar(params.att_limit)) next(i) = Scalar(params.att_limit);
        if (next(i) < Scalar(-params.att_limit)) next(i) = Scalar(-params.att_limit);
    }
    return next;
}

inline State step(const State& s, const ControlInput& u, const DynamicsParams& params, double dt) {
    return State::from_vec(step<double>(s.vec(), u.vec(), params, dt));
}

inline ControlInput clamp(const ControlInput& u, const DynamicsParams& params) {
    ControlInput out;
    for (int i = 0; i < 3; ++i) {
        out.rate_cmd(i) = std::clamp(u.rate_cmd(i), -params.rate_max, params.rate_max);
    }
    out.thrust_cmd = std::clamp(u.thrust_cmd, params.thrust_min, params.thrust_max);
    return out;
}

struct Linearization {
    StateMatrix A;
    InputMatrix B;
};

/// Exact Jacobians of step() at (x, u), via forward-mode autodiff.
inline Linearization linearize(const StateVec<double>& x, const InputVec<double>& u,
                               const DynamicsParams& params, double dt) {
    using Deriv = Eigen::Matrix<double, kStateDim + kInputDim, 1>;
    using AD = Eigen::AutoDiffScalar<Deriv>;
    StateVec<AD> xa;
    InputVec<AD> ua;
    for (int i = 0; i < kStateDim; ++i) {
        xa(i) = AD(x(i), kStateDim + kInputDim, i);
    }
    for (int i = 0; i < kInputDim; ++i) {
        ua(i) = AD(u(i), kStateDim + kInputDim, kStateDim + i);
    }
    const StateVec<AD> next = step<AD>(xa, ua, params, dt);
    Linearization lin;
    for (int r = 0; r < kStateDim; ++r) {
        lin.A.row(r) = next(r).derivatives().head<kStateDim>().transpose();
        lin.B.row(r) = next(r).derivatives().tail<kInputDim>().transpose();
    }
    return lin;
}

inline Linearization linearize(const State& s, const ControlInput& u, const DynamicsParams& params,
                               double dt) {
    return linearize(s.vec(), u.vec(), params, dt);
}

}  // namespace semland
