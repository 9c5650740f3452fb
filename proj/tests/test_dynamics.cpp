#include <cstring>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "semland/dynamics.hpp"

using namespace semland;

namespace {

StateVec<double> random_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-5, 5), vel(-2, 2), ang(-0.6, 0.6), yaw(-3, 3);
    StateVec<double> x;
    x << pos(rng), pos(rng), pos(rng), vel(rng), vel(rng), vel(rng), ang(rng), ang(rng), yaw(rng);
    return x;
}

InputVec<double> random_input(std::mt19937_64& rng, const DynamicsParams& p) {
    std::uniform_real_distribution<double> rate(-1.0, 1.0), thrust(p.thrust_min, p.thrust_max);
    InputVec<double> u;
    u << rate(rng), rate(rng), rate(rng), thrust(rng);
    return u;
}

}  // namespace

TEST_CASE("rotation matrix: identity and yaw quarter turn") {
    CHECK(rotation_matrix(Eigen::Vector3d::Zero()).isApprox(Eigen::Matrix3d::Identity(), 1e-15));
    const Eigen::Matrix3d R = rotation_matrix(Eigen::Vector3d(0, 0, M_PI / 2));
    CHECK((R * Eigen::Vector3d::UnitX() - Eigen::Vector3d::UnitY()).norm() < 1e-15);
}

TEST_CASE("rotation matrix matches composed axis rotations") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    for (int i = 0; i < 500; ++i) {
        const Eigen::Vector3d att(ang(rng), ang(rng), ang(rng));
        const Eigen::Matrix3d R = rotation_matrix(att);
        const Eigen::Matrix3d oracle = oracle::axis_rotation(2, att(2)) *
                                       oracle::axis_rotation(1, att(1)) *
                                       oracle::axis_rotation(0, att(0));
        CHECK((R - oracle).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("step: hover equilibrium and free fall") {
    DynamicsParams params;
    State s;
    s.p = Eigen::Vector3d(1, -2, 3);
    const State next = step(s, ControlInput::hover(params), params, params.dt);
    CHECK((next.vec() - s.vec()).cwiseAbs().maxCoeff() < 1e-12);

    ControlInput off;
    off.thrust_cmd = 0.0;
    const State fall = step(s, off, params, 0.1);
    CHECK(std::abs(fall.v.z() + 0.981) < 1e-9);
}

TEST_CASE("step: free fall position over one second") {
    DynamicsParams params;
    State s;
    s.p.z() = 10.0;
    ControlInput off;
    for (int k = 0; k < 20; ++k) s = step(s, off, params, 0.05);
    CHECK(std::abs(s.p.z() - (10.0 - 0.5 * params.g)) < 1e-6);
}

TEST_CASE("step agrees with fine-step Euler") {
    DynamicsParams params;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const StateVec<double> x = random_state(rng);
        const InputVec<double> u = random_input(rng, params);
        const StateVec<double> rk = step<double>(x, u, params, 0.05);
        const StateVec<double> eu = oracle::euler_rollout(x, u, params, 0.05, 1000);
        CHECK((rk - eu).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("step clamps roll and pitch") {
    DynamicsParams params;
    State s;
    s.att = Eigen::Vector3d(1.19, -1.19, 0.0);
    ControlInput u;
    u.rate_cmd = Eigen::Vector3d(3.0, -3.0, 0.0);
    u.thrust_cmd = params.g;
    const State next = step(s, u, params, params.dt);
    CHECK(next.att(0) == params.att_limit);
    CHECK(next.att(1) == -params.att_limit);
}

TEST_CASE("step is bit-for-bit deterministic") {
    DynamicsParams params;
    std::mt19937_64 rng(3);
    const StateVec<double> x = random_state(rng);
    const InputVec<double> u = random_input(rng, params);
    const StateVec<double> a = step<double>(x, u, params, 0.05);
    const StateVec<double> b = step<double>(x, u, params, 0.05);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * kStateDim) == 0);
}

TEST_CASE("linearize: kinematic structure at hover") {
    DynamicsParams params;
    const Linearization lin = linearize(State{}, ControlInput::hover(params), params, params.dt);
    CHECK((lin.A.block<3, 3>(0, 3) - params.dt * Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
          1e-14);
    // thrust column touches only the vertical channel at level attitude
    const Eigen::Matrix<double, 9, 1> col = lin.B.col(3);
    CHECK(col(5) == doctest::Approx(params.dt));
    for (int r : {0, 1, 3, 4, 6, 7, 8}) CHECK(col(r) == 0.0);
}

TEST_CASE("clamp keeps inputs within bounds") {
    DynamicsParams params;
    ControlInput u{Eigen::Vector3d(10, -10, 0.5), 100.0};
    const ControlInput c = clamp(u, params);
    CHECK(c.rate_cmd(0) == params.rate_max);
    CHECK(c.rate_cmd(1) == -params.rate_max);
    CHECK(c.rate_cmd(2) == 0.5);
    CHECK(c.thrust_cmd == params.thrust_max);
}

TEST_CASE("linearize matches central finite differences") {
    DynamicsParams params;
    std::mt19937_64 rng(17);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const StateVec<double> x = random_state(rng);
        const InputVec<double> u = random_input(rng, params);
        const Linearization lin = linearize(x, u, params, params.dt);
        Eigen::VectorXd xu(13);
        xu << x, u;
        auto fn = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
            return step<double>(z.head<9>(), z.tail<4>(), params, params.dt);
        };
        const Eigen::MatrixXd J = oracle::central_difference(fn, xu, 1e-6);
        Eigen::MatrixXd analytic(9, 13);
        analytic << lin.A, lin.B;
        const double rel = (analytic - J).cwiseAbs().maxCoeff() /
                           std::max(1.0, analytic.cwiseAbs().maxCoeff());
        worst = std::max(worst, rel);
    }
    CHECK(worst <= 1e-5);
}
