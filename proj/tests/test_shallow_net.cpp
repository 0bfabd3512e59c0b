#include <snlab/activation.hpp>
#include <snlab/random.hpp>
#include <snlab/shallow_net.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace snlab;

namespace {

NetParams scalar_net(double w, double v) { return {Matrix{{w}}, Matrix{{v}}}; }

const ActivationProfile& id() { return activation("identity"); }

struct Instance {
  NetParams theta;
  Matrix x;
  Matrix y;
};

Instance random_instance(const RngStream& rng) {
  std::uint64_t c = 0;
  auto dim = [&] { return static_cast<std::size_t>(1 + rng.below(6, c)); };
  const std::size_t d0 = dim(), d1 = dim(), d2 = dim(), n = dim();
  return {{gaussian_matrix(d1, d0, 0.7, rng.child(1)), gaussian_matrix(d2, d1, 0.7, rng.child(2))},
          gaussian_matrix(d0, n, 1.0, rng.child(3)),
          gaussian_matrix(d2, n, 0.5, rng.child(4))};
}

}  // namespace

TEST(Forward, ZeroWeightsPropagateZero) {
  const NetParams theta{Matrix(3, 2), Matrix{{1.0, -2.0, 5.0}}};
  const Matrix x{{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_EQ(forward(theta, x, activation("gelu")), Matrix(1, 2));
}

TEST(Forward, ScalarHandArithmetic) {
  EXPECT_EQ(forward(scalar_net(2.0, 3.0), Matrix{{1.0}}, id())(0, 0), 6.0);
}

TEST(Forward, SquareActivation) {
  const NetParams theta{Matrix::identity(2), Matrix{{1.0, 1.0}}};
  EXPECT_EQ(forward(theta, Matrix::identity(2), activation("square")), (Matrix{{1.0, 1.0}}));
}

TEST(Forward, ShapeMismatchThrows) {
  const NetParams bad{Matrix(3, 2), Matrix(1, 4)};
  EXPECT_THROW(forward(bad, Matrix(2, 2), id()), DimensionError);
  const NetParams theta{Matrix(3, 2), Matrix(1, 3)};
  EXPECT_THROW(forward(theta, Matrix(4, 2), id()), DimensionError);
}

TEST(Loss, HandValues) {
  const Dataset scalar{Matrix{{1.0}}, Matrix{{0.0}}};
  EXPECT_EQ(loss(scalar_net(1.0, 1.0), scalar, id()), 1.0);
  const Dataset exact{Matrix{{1.0}}, Matrix{{6.0}}};
  EXPECT_EQ(loss(scalar_net(2.0, 3.0), exact, id()), 0.0);
  const Dataset d{Matrix{{1.0, 0.0}, {0.0, 1.0}}, Matrix{{0.3, -0.4}}};
  const NetParams zero_v{Matrix{{1.0, 2.0}, {3.0, 4.0}}, Matrix(1, 2)};
  EXPECT_NEAR(loss(zero_v, d, activation("tanh")), 0.25, 1e-15);
}

TEST(Dataset, ValidatesAssumptions) {
  EXPECT_THROW(make_dataset(Matrix{{2.0}}, Matrix{{0.0}}), PreconditionError);
  EXPECT_THROW(make_dataset(Matrix{{1.0}}, Matrix{{1.5}}), PreconditionError);
  EXPECT_THROW(make_dataset(Matrix{{1.0, 1.0}}, Matrix{{0.0}}), DimensionError);
  EXPECT_NO_THROW(make_dataset(Matrix{{1.0}}, Matrix{{1.0}}));
}

TEST(Jacobian, ScalarHandValues) {
  const auto theta = scalar_net(2.0, 3.0);
  const Matrix x{{1.0}};
  const auto jd = jacobian_apply(theta, scalar_net(0.1, -0.2), x, id());
  EXPECT_NEAR(jd(0, 0), 3.0 * 0.1 + 2.0 * -0.2, 1e-15);
  const auto adj = jacobian_adjoint(theta, Matrix{{1.0}}, x, id());
  EXPECT_EQ(adj.W(0, 0), 3.0);
  EXPECT_EQ(adj.V(0, 0), 2.0);
}

TEST(Jacobian, LinearAtZero) {
  const auto inst = random_instance(RngStream(1));
  const auto& phi = activation("gelu");
  EXPECT_EQ(jacobian_apply(inst.theta, NetParams::zeros_like(inst.theta), inst.x, phi),
            Matrix(inst.y.rows(), inst.y.cols()));
  const auto adj = jacobian_adjoint(inst.theta, Matrix(inst.y.rows(), inst.y.cols()), inst.x, phi);
  EXPECT_EQ(squared_norm(adj), 0.0);
}

TEST(Jacobian, MatchesForwardDifferences) {
  const RngStream rng(17);
  for (std::uint64_t k = 0; k < 50; ++k) {
    const auto inst = random_instance(rng.child(k));
    const NetParams delta{gaussian_matrix(inst.theta.d1(), inst.theta.d0(), 1.0, rng.child(1000 + k)),
                          gaussian_matrix(inst.theta.d2(), inst.theta.d1(), 1.0, rng.child(2000 + k))};
    for (auto name : {"tanh", "gelu", "softplus-shifted"}) {
      const auto& phi = activation(name);
      const double eps = 1e-6;
      // Central differences keep the truncation error at O(eps^2).
      const Matrix fd = (1.0 / (2.0 * eps)) * (forward(inst.theta + eps * delta, inst.x, phi) -
                                               forward(inst.theta - eps * delta, inst.x, phi));
      const Matrix jd = jacobian_apply(inst.theta, delta, inst.x, phi);
      EXPECT_LE(frobenius_norm(fd - jd), 1e-5 * std::max(1.0, frobenius_norm(jd))) << name;
    }
  }
}

TEST(Jacobian, AdjointDuality) {
  const RngStream rng(23);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const auto inst = random_instance(rng.child(k));
    const NetParams delta{gaussian_matrix(inst.theta.d1(), inst.theta.d0(), 1.0, rng.child(500 + k)),
                          gaussian_matrix(inst.theta.d2(), inst.theta.d1(), 1.0, rng.child(600 + k))};
    const Matrix cot = gaussian_matrix(inst.y.rows(), inst.y.cols(), 1.0, rng.child(700 + k));
    for (auto name : {"identity", "square", "tanh", "gelu"}) {
      const auto& phi = activation(name);
      const Matrix jd = jacobian_apply(inst.theta, delta, inst.x, phi);
      const NetParams ja = jacobian_adjoint(inst.theta, cot, inst.x, phi);
      const double lhs = dot(cot, jd);
      const double rhs = dot(ja, delta);
      const double scale = frobenius_norm(cot) * frobenius_norm(jd) + norm(ja) * norm(delta);
      EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::max(1.0, scale)) << name;
    }
  }
}

TEST(Jacobian, MatrixMatchesOperator) {
  const auto inst = random_instance(RngStream(29));
  const auto& phi = activation("gelu");
  const Matrix j = jacobian_matrix(inst.theta, inst.x, phi);
  const NetParams delta{gaussian_matrix(inst.theta.d1(), inst.theta.d0(), 1.0, RngStream(30)),
                        gaussian_matrix(inst.theta.d2(), inst.theta.d1(), 1.0, RngStream(31))};
  Matrix flat(j.cols(), 1);
  std::size_t p = 0;
  for (double v : delta.W.data()) flat(p++, 0) = v;
  for (double v : delta.V.data()) flat(p++, 0) = v;
  const Matrix jd = matmul(j, flat);
  const Matrix ref = jacobian_apply(inst.theta, delta, inst.x, phi);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(jd.data()[i], ref.data()[i], 1e-12);
}

TEST(Jacobian, KernelRouteAgreesWithMaterializedSvd) {
  // d1 d0 + d2 d1 = 4100 parameters takes the kernel route.
  const std::size_t d0 = 40, d1 = 100, d2 = 1, n = 12;
  const RngStream rng(41);
  const NetParams theta{gaussian_matrix(d1, d0, 0.3, rng.child(0)),
                        gaussian_matrix(d2, d1, 0.3, rng.child(1))};
  ASSERT_GT(theta.parameter_count(), kMaterializeLimit);
  const Matrix x = gaussian_matrix(d0, n, 1.0, rng.child(2));
  const auto& phi = activation("tanh");
  const auto kernel = adjoint_extremes(theta, x, phi);
  const auto direct = svd_extremes(jacobian_matrix(theta, x, phi));
  EXPECT_NEAR(kernel.sigma_max, direct.sigma_max, 1e-9 * direct.sigma_max);
  EXPECT_NEAR(kernel.sigma_min, direct.sigma_min, 1e-6 * direct.sigma_max);
}

TEST(Gradient, ScalarHandValues) {
  const Dataset d{Matrix{{1.0}}, Matrix{{0.0}}};
  const auto g = gradient(scalar_net(1.0, 1.0), d, id());
  EXPECT_EQ(g.W(0, 0), 2.0);
  EXPECT_EQ(g.V(0, 0), 2.0);
  const Dataset exact{Matrix{{1.0}}, Matrix{{6.0}}};
  EXPECT_EQ(squared_norm(gradient(scalar_net(2.0, 3.0), exact, id())), 0.0);
}

TEST(Gradient, MatchesCentralDifferences) {
  const RngStream rng(53);
  for (std::uint64_t k = 0; k < 100; ++k) {
    auto inst = random_instance(rng.child(k));
    const Dataset d{inst.x, inst.y};
    const auto& phi = activation(k % 2 ? "gelu" : "tanh");
    const auto g = gradient(inst.theta, d, phi);
    const auto fused = loss_and_gradient(inst.theta, d.X, d.Y, phi);
    EXPECT_LE(norm(g - fused.grad), 1e-14 * std::max(1.0, norm(g)));
    EXPECT_DOUBLE_EQ(fused.loss, loss(inst.theta, d, phi));
    NetParams fd = NetParams::zeros_like(inst.theta);
    const double h = 1e-5;
    auto probe = [&](Matrix& param, Matrix& out) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param.data()[i];
        param.data()[i] = keep + h;
        const double up = loss(inst.theta, d, phi);
        param.data()[i] = keep - h;
        const double down = loss(inst.theta, d, phi);
        param.data()[i] = keep;
        out.data()[i] = (up - down) / (2.0 * h);
      }
    };
    probe(inst.theta.W, fd.W);
    probe(inst.theta.V, fd.V);
    EXPECT_LE(norm(fd - g), 1e-5 * std::max(1.0, norm(g)));
  }
}
