#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/models.hpp"
#include "fedsim/rng.hpp"
#include "support/oracles.hpp"

using namespace fedsim;

namespace {

LocalDataset random_dataset(std::size_t n, std::size_t dim, std::size_t classes,
                            std::size_t blocks, Rng& rng) {
  LocalDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dim);
    for (auto& v : x) v = rng.normal();
    d.features.push_back(std::move(x));
    d.labels.push_back(static_cast<double>(i % classes));
  }
  d.set_blocks(blocks);
  return d;
}

ParamVector random_params(std::size_t n, Rng& rng, double scale = 0.5) {
  ParamVector p(n);
  for (auto& v : p) v = scale * rng.normal();
  return p;
}

}  // namespace

TEST_CASE("binary logistic at w=0 costs ln 2 per sample") {
  Rng rng(1);
  const BinaryLogistic model(6);
  const LocalDataset data = random_dataset(10, 6, 2, 2, rng);
  CHECK(model.loss(ParamVector(6), data) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("least squares is zero at an exact fit") {
  LeastSquares model(2);
  const ParamVector w{2.0, -1.0};
  LocalDataset data;
  Rng rng(2);
  for (int i = 0; i < 6; ++i) {
    std::vector<double> x{rng.normal(), rng.normal()};
    data.labels.push_back(w[0] * x[0] + w[1] * x[1]);
    data.features.push_back(std::move(x));
  }
  data.set_blocks(3);
  CHECK(model.loss(w, data) == doctest::Approx(0.0));
}

TEST_CASE("least squares scalar gradient") {
  LeastSquares model(1);
  LocalDataset data;
  data.features = {{1.0}};
  data.labels = {0.0};
  data.set_blocks(1);
  const ParamVector g = model.block_gradient(ParamVector{2.0}, data, 0);
  CHECK(g[0] == doctest::Approx(2.0));
}

TEST_CASE("trace regression closed-form cases") {
  TraceRegression model(2);
  LocalDataset data;
  data.features = {{1.0, 0.0, 0.0, 1.0}};  // D = I_2
  data.labels = {0.0};
  data.set_blocks(1);
  const ParamVector x_id{1.0, 0.0, 0.0, 1.0};  // X = I_2
  CHECK(model.loss(x_id, data) == doctest::Approx(4.0));  // (<I,I> - 0)^2
  const ParamVector g = model.block_gradient(x_id, data, 0);
  // 2 (<X,D> - y) D = 4 I
  CHECK(g[0] == doctest::Approx(4.0));
  CHECK(g[1] == doctest::Approx(0.0));
  CHECK(g[2] == doctest::Approx(0.0));
  CHECK(g[3] == doctest::Approx(4.0));

  LocalDataset exact;
  exact.features = {{0.3, -0.2, 1.1, 0.4}};
  exact.labels = {0.3 + 0.4};  // <I_2, D>
  exact.set_blocks(1);
  CHECK(model.loss(x_id, exact) == doctest::Approx(0.0));
}

TEST_CASE("block gradients match central finite differences for every model") {
  Rng rng(42);
  struct Case {
    std::unique_ptr<LossModel> model;
    LocalDataset data;
  };
  std::vector<Case> cases;
  {
    Case c{std::make_unique<BinaryLogistic>(5, 0.01),
           random_dataset(12, 5, 2, 3, rng)};
    cases.push_back(std::move(c));
  }
  {
    Case c{std::make_unique<MultinomialLogistic>(4, 3, 0.0),
           random_dataset(12, 4, 3, 3, rng)};
    cases.push_back(std::move(c));
  }
  {
    Case c{std::make_unique<LeastSquares>(5, 0.1),
           random_dataset(10, 5, 2, 2, rng)};
    cases.push_back(std::move(c));
  }
  {
    Case c{std::make_unique<TraceRegression>(3), random_dataset(8, 9, 2, 2, rng)};
    cases.push_back(std::move(c));
  }

  for (const auto& c : cases) {
    for (int point = 0; point < 5; ++point) {
      const ParamVector p = random_params(c.model->param_size(), rng);
      for (std::size_t j = 0; j < c.data.num_blocks(); ++j) {
        const LocalDataset block = oracles::block_restricted(c.data, j);
        const ParamVector got = c.model->block_gradient(p, c.data, j);
        const ParamVector want = oracles::fd_gradient(*c.model, p, block);
        CHECK(oracles::rel_error(got, want) <= 1e-5);
      }
    }
  }
}

TEST_CASE("mlp backprop matches finite differences on a small instance") {
  Rng rng(9);
  TwoLayerMlp model(3, 2, /*hidden=*/4);
  const LocalDataset data = random_dataset(6, 3, 2, 2, rng);
  for (int point = 0; point < 5; ++point) {
    Rng init(100 + point);
    const ParamVector p = model.init_params(init);
    for (std::size_t j = 0; j < data.num_blocks(); ++j) {
      const LocalDataset block = oracles::block_restricted(data, j);
      const ParamVector got = model.block_gradient(p, data, j);
      const ParamVector want = oracles::fd_gradient(model, p, block);
      CHECK(oracles::rel_error(got, want) <= 1e-4);
    }
  }
}

TEST_CASE("full gradient is exactly the M-block mean of block gradients") {
  Rng rng(17);
  const MultinomialLogistic model(4, 3);
  const LocalDataset data = random_dataset(12, 4, 3, 4, rng);
  const ParamVector p = random_params(model.param_size(), rng);
  const ParamVector full = model.full_gradient(p, data);
  ParamVector mean = model.block_gradient(p, data, 0);
  for (std::size_t j = 1; j < data.num_blocks(); ++j) {
    mean += model.block_gradient(p, data, j);
  }
  mean *= 1.0 / static_cast<double>(data.num_blocks());
  for (std::size_t k = 0; k < full.size(); ++k) CHECK(full[k] == mean[k]);
}

TEST_CASE("full gradient with one block equals that block's gradient") {
  Rng rng(18);
  const LeastSquares model(3);
  const LocalDataset data = random_dataset(6, 3, 2, 1, rng);
  const ParamVector p = random_params(3, rng);
  const ParamVector full = model.full_gradient(p, data);
  const ParamVector blk = model.block_gradient(p, data, 0);
  for (std::size_t k = 0; k < full.size(); ++k) CHECK(full[k] == blk[k]);
}

TEST_CASE("full gradient reproduces the direct whole-dataset gradient") {
  Rng rng(19);
  const BinaryLogistic model(4);
  // block count divides the sample count, so the block-mean of means is the
  // plain sample mean
  const LocalDataset data = random_dataset(12, 4, 2, 4, rng);
  const ParamVector p = random_params(4, rng);
  const ParamVector full = model.full_gradient(p, data);
  const ParamVector direct = oracles::fd_gradient(model, p, data);
  CHECK(oracles::rel_error(full, direct) <= 1e-5);
  LocalDataset whole = data;
  whole.set_blocks(1);
  const ParamVector exact = model.block_gradient(p, whole, 0);
  for (std::size_t k = 0; k < full.size(); ++k) {
    CHECK(full[k] == doctest::Approx(exact[k]).epsilon(1e-12));
  }
}

TEST_CASE("l2 regularization enters linearly") {
  Rng rng(20);
  const LocalDataset data = random_dataset(9, 4, 3, 3, rng);
  const ParamVector p = random_params(MultinomialLogistic(4, 3).param_size(), rng);
  const double mu = 0.3;
  const MultinomialLogistic plain(4, 3, 0.0);
  const MultinomialLogistic reg(4, 3, mu);
  const ParamVector g0 = plain.block_gradient(p, data, 1);
  const ParamVector g1 = reg.block_gradient(p, data, 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    CHECK(g1[k] - mu * p[k] == doctest::Approx(g0[k]).epsilon(1e-12));
  }
}

TEST_CASE("with l2 the convex losses have positive curvature") {
  Rng rng(23);
  struct Case {
    std::unique_ptr<LossModel> model;
    LocalDataset data;
  };
  std::vector<Case> cases;
  cases.push_back(
      {std::make_unique<BinaryLogistic>(4, 0.05), random_dataset(8, 4, 2, 2, rng)});
  cases.push_back(
      {std::make_unique<LeastSquares>(4, 0.05), random_dataset(8, 4, 2, 2, rng)});
  for (const auto& c : cases) {
    const ParamVector p = random_params(c.model->param_size(), rng);
    for (int trial = 0; trial < 10; ++trial) {
      ParamVector u = random_params(p.size(), rng, 1.0);
      u *= 1.0 / norm2(u);
      const double eps = 1e-4;
      ParamVector hi = p, lo = p;
      axpy(eps, u, hi);
      axpy(-eps, u, lo);
      const double curvature = (c.model->loss(hi, c.data) -
                                2.0 * c.model->loss(p, c.data) +
                                c.model->loss(lo, c.data)) /
                               (eps * eps);
      CHECK(curvature > 0.0);
    }
  }
}

TEST_CASE("accuracy of a perfect separable fit is 1") {
  BinaryLogistic model(2);
  LocalDataset data;
  data.features = {{1.0, 0.5}, {2.0, 1.0}, {-1.0, -0.2}, {-0.5, -2.0}};
  data.labels = {1, 1, 0, 0};
  data.set_blocks(1);
  CHECK(model.accuracy(ParamVector{3.0, 1.0}, data) == doctest::Approx(1.0));
}

TEST_CASE("flipping binary labels complements the accuracy") {
  Rng rng(31);
  BinaryLogistic model(5);
  LocalDataset data = random_dataset(21, 5, 2, 1, rng);
  const ParamVector w = random_params(5, rng, 1.0);
  const double acc = model.accuracy(w, data);
  for (auto& y : data.labels) y = 1.0 - y;
  CHECK(model.accuracy(w, data) == doctest::Approx(1.0 - acc));
}

TEST_CASE("random parameters on balanced two-class data stay near chance") {
  double total = 0.0;
  for (int s = 0; s < 10; ++s) {
    Rng rng(1000 + s);
    BinaryLogistic model(6);
    const LocalDataset data = random_dataset(2000, 6, 2, 1, rng);
    const ParamVector w = random_params(6, rng, 1.0);
    total += model.accuracy(w, data);
  }
  CHECK(total / 10.0 == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("accuracy is unsupported for regression models") {
  Rng rng(33);
  LeastSquares model(3);
  const LocalDataset data = random_dataset(6, 3, 2, 1, rng);
  CHECK_THROWS_AS(model.accuracy(ParamVector(3), data), Unsupported);
}

TEST_CASE("shape validation") {
  Rng rng(34);
  BinaryLogistic model(4);
  const LocalDataset data = random_dataset(6, 4, 2, 2, rng);
  CHECK_THROWS_AS(model.loss(ParamVector(5), data), InvalidInput);
  CHECK_THROWS_AS(model.block_gradient(ParamVector(4), data, 2), InvalidInput);
}
