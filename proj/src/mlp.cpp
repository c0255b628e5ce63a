// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lidarsim/error.hpp"
#include "lidarsim/random.hpp"
#include "lidarsim/raydrop.hpp"

namespace lidarsim {

void MlpHyperParams::validate() const {
  if (hidden.empty()) throw DomainError("MLP needs at least one hidden layer");
  for (int h : hidden)
    if (h <= 0) throw DomainError("hidden layer width must be positive");
  if (epochs <= 0 || batch_size <= 0 || record_every <= 0)
    throw DomainError("epochs, batch_size and record_every must be positive");
  if (!(learning_rate > 0.0) || !(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0))
    throw DomainError("invalid learning rate schedule");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    throw DomainError("invalid Adam parameters");
}

namespace {

Eigen::Matrix3Xd normalize(const Surrogate& s, const Eigen::Matrix3Xd& x) {
  const Eigen::Vector3d span = (s.input_max - s.input_min).cwiseMax(1e-12);
  return (x.colwise() - s.input_min).array().colwise() / span.array();
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct Forward {
  std::vector<Eigen::MatrixXd> act;  // act[0] is the input, act.back() the output
};

Forward forward(const Surrogate& s, const Eigen::MatrixXd& xn) {
  Forward f;
  f.act.push_back(xn);
  const std::size_t L = s.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = (s.weights[l] * f.act.back()).colwise() + s.biases[l];
    if (l + 1 < L)
      z = z.cwiseMax(0.0);
    else
      z = z.unaryExpr(&sigmoid);
    f.act.push_back(std::move(z));
  }
  return f;
}

double weighted_loss(const Surrogate& s, const Eigen::MatrixXd& xn, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& w) {
  const Eigen::VectorXd out = forward(s, xn).act.back().row(0).transpose();
  return (w.array() * (out - y).array().square()).sum() / w.sum();
}

}  // namespace

Eigen::VectorXd Surrogate::predict_batch(const Eigen::Matrix3Xd& features) const {
  if (weights.empty()) throw DomainError("surrogate has no layers");
  return forward(*this, normalize(*this, features)).act.back().row(0).transpose();
}

double Surrogate::predict(const RayFeature& f) const {
  Eigen::Matrix3Xd x(3, 1);
  x << f.distance, f.incidence, f.intensity;
  return predict_batch(x)[0];
}

Surrogate train_surrogate(const ParamVoxelGrid& grid, const MlpHyperParams& hyper,
                          std::uint64_t seed) {
  hyper.validate();
  std::vector<std::size_t> voxels;
  for (std::size_t v = 0; v < grid.voxel_count(); ++v)
    if (grid.defined(v)) voxels.push_back(v);
  if (voxels.size() < 50)
    throw TrainingError("surrogate training needs at least 50 defined voxels, got " +
                        std::to_string(voxels.size()));

  Surrogate s;
  s.seed = seed;
  s.input_min = {grid.bins.distance.min, grid.bins.incidence.min, grid.bins.intensity.min};
  s.input_max = {grid.bins.distance.max, grid.bins.incidence.max, grid.bins.intensity.max};
  s.layer_sizes.push_back(3);
  for (int h : hyper.hidden) s.layer_sizes.push_back(h);
  s.layer_sizes.push_back(1);

  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < s.layer_sizes.size(); ++l) {
    const int in = s.layer_sizes[l], out = s.layer_sizes[l + 1];
    const double sd = std::sqrt(2.0 / in);
    Eigen::MatrixXd W(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) W(r, c) = rng.normal(0.0, sd);
    s.weights.push_back(std::move(W));
    s.biases.push_back(Eigen::VectorXd::Zero(out));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(voxels.size());
  Eigen::Matrix3Xd x(3, n);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const RayFeature c = grid.center(voxels[k]);
    x.col(k) << c.distance, c.incidence, c.intensity;
    y[k] = *grid.ratio(voxels[k]);
    w[k] = static_cast<double>(grid.sim_count[voxels[k]]);
  }
  w *= static_cast<double>(n) / w.sum();
  const Eigen::MatrixXd xn = normalize(s, x);

  const std::size_t L = s.weights.size();
  std::vector<Eigen::MatrixXd> mW(L), vW(L);
  std::vector<Eigen::VectorXd> mb(L), vb(L);
  for (std::size_t l = 0; l < L; ++l) {
    mW[l] = vW[l] = Eigen::MatrixXd::Zero(s.weights[l].rows(), s.weights[l].cols());
    mb[l] = vb[l] = Eigen::VectorXd::Zero(s.biases[l].size());
  }

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index batch = std::min<Eigen::Index>(hyper.batch_size, n);
  const std::int64_t batches_per_epoch = (n + batch - 1) / batch;
  const double total_steps = static_cast<double>(hyper.epochs) * batches_per_epoch;
  std::int64_t step = 0;

  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<Eigen::MatrixXd> best_weights = s.weights;
  std::vector<Eigen::VectorXd> best_biases = s.biases;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.index(static_cast<std::uint64_t>(i) + 1)]);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      Eigen::MatrixXd xb(3, m);
      Eigen::RowVectorXd yb(m), wb(m);
      for (Eigen::Index k = 0; k < m; ++k) {
        xb.col(k) = xn.col(order[start + k]);
        yb[k] = y[order[start + k]];
        wb[k] = w[order[start + k]];
      }
      const Forward f = forward(s, xb);
      const Eigen::RowVectorXd out = f.act.back().row(0);
      // d(loss)/d(pre-sigmoid) for weighted MSE averaged over the batch.
      Eigen::MatrixXd delta =
          (2.0 / m) * (wb.array() * (out - yb).array() * out.array() * (1.0 - out.array())).matrix();

      const double progress = static_cast<double>(step) / total_steps;
      const double lr = hyper.learning_rate *
                        (hyper.final_lr_fraction +
                         (1.0 - hyper.final_lr_fraction) * 0.5 * (1.0 + std::cos(kPi * progress)));
      ++step;
      const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));

      for (std::size_t l = L; l-- > 0;) {
        const Eigen::MatrixXd gW = delta * f.act[l].transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        if (l > 0) {
          delta = (s.weights[l].transpose() * delta).cwiseProduct(
              (f.act[l].array() > 0.0).cast<double>().matrix());
        }
        mW[l] = hyper.beta1 * mW[l] + (1 - hyper.beta1) * gW;
        vW[l] = hyper.beta2 * vW[l] + (1 - hyper.beta2) * gW.cwiseAbs2();
        mb[l] = hyper.beta1 * mb[l] + (1 - hyper.beta1) * gb;
        vb[l] = hyper.beta2 * vb[l] + (1 - hyper.beta2) * gb.cwiseAbs2();
        s.weights[l].array() -=
            lr * (mW[l].array() / bc1) / ((vW[l].array() / bc2).sqrt() + hyper.epsilon);
        s.biases[l].array() -=
            lr * (mb[l].array() / bc1) / ((vb[l].array() / bc2).sqrt() + hyper.epsilon);
      }
    }
    if ((epoch + 1) % hyper.record_every == 0 || epoch + 1 == hyper.epochs) {
      const double loss = weighted_loss(s, xn, y, w);
      if (!std::isfinite(loss)) throw TrainingError("surrogate loss diverged");
      if (loss <= best_loss) {
        best_loss = loss;
        best_weights = s.weights;
        best_biases = s.biases;
      }
      if ((epoch + 1) % hyper.record_every == 0) s.loss_history.push_back(best_loss);
    }
  }
  s.weights = std::move(best_weights);
  s.biases = std::move(best_biases);
  s.final_loss = best_loss;
  return s;
}

Json to_json(const Surrogate& s) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < s.weights.size(); ++l) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < s.weights[l].rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < s.weights[l].cols(); ++c) row.push_back(s.weights[l](r, c));
      rows.push_back(std::move(row));
    }
    layers.push_back({{"weights", std::move(rows)},
                      {"bias", std::vector<double>(s.biases[l].data(),
                                                   s.biases[l].data() + s.biases[l].size())}});
  }
  return Json{{"kind", "mlp"},
              {"layer_sizes", s.layer_sizes},
              {"layers", std::move(layers)},
              {"input_min", to_json(Vec3(s.input_min))},
              {"input_max", to_json(Vec3(s.input_max))},
              {"seed", s.seed},
              {"loss_history", s.loss_history},
              {"final_loss", s.final_loss}};
}

Surrogate surrogate_from_json(const Json& j) {
  Surrogate s;
  s.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  if (s.layer_sizes.size() < 2 || s.layer_sizes.front() != 3 || s.layer_sizes.back() != 1)
    throw DomainError("surrogate layer sizes must run from 3 inputs to 1 output");
  const Json& layers = j.at("layers");
  if (layers.size() + 1 != s.layer_sizes.size()) throw DomainError("surrogate layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const int in = s.layer_sizes[l], out = s.layer_sizes[l + 1];
    const Json& rows = layers[l].at("weights");
    const auto bias = layers[l].at("bias").get<std::vector<double>>();
    if (rows.size() != static_cast<std::size_t>(out) || bias.size() != static_cast<std::size_t>(out))
      throw DomainError("surrogate layer shape mismatch");
    Eigen::MatrixXd W(out, in);
    for (int r = 0; r < out; ++r) {
      const auto row = rows[r].get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(in)) throw DomainError("surrogate layer shape mismatch");
      for (int c = 0; c < in; ++c) W(r, c) = row[c];
    }
    s.weights.push_back(std::move(W));
    s.biases.push_back(Eigen::Map<const Eigen::VectorXd>(bias.data(), out));
  }
  s.input_min = vec3_from_json(j.at("input_min"));
  s.input_max = vec3_from_json(j.at("input_max"));
  s.seed = j.value("seed", std::uint64_t{0});
  s.loss_history = j.value("loss_history", std::vector<double>{});
  s.final_loss = j.value("final_loss", 0.0);
  return s;
}

}  // namespace lidarsim
