#include "mlp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "error.hpp"

namespace eqcausal {

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw Error(ErrorCode::InvalidArgument, "MLP input and output sizes must be positive");
  }
  for (int h : hidden) {
    if (h < 1) throw Error(ErrorCode::InvalidArgument, "MLP hidden sizes must be positive");
  }
}

std::vector<int> MlpSpec::widths() const {
  std::vector<int> w;
  w.push_back(input_dim);
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output_dim);
  return w;
}

int MlpSpec::param_count() const {
  const auto w = widths();
  int n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l + 1] * w[l] + w[l + 1];
  return n;
}

Vector mlp_init(const MlpSpec& spec) {
  spec.validate();
  const auto w = spec.widths();
  Vector out(spec.param_count());
  std::mt19937_64 rng(spec.seed);
  int pos = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l];
    const int n = w[l + 1] * in + w[l + 1];
    const bool last = l + 2 == w.size();
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int i = 0; i < n; ++i) {
      const double v = dist(rng);
      out[pos + i] = (last && spec.zero_output_layer) ? 0.0 : v;
    }
    pos += n;
  }
  return out;
}

Vector mlp_forward(const MlpSpec& spec, const Vector& weights, const Vector& input) {
  spec.validate();
  if (input.size() != spec.input_dim) {
    throw Error(ErrorCode::DimensionMismatch, "MLP input has " + std::to_string(input.size()) +
                                                  " entries, expected " +
                                                  std::to_string(spec.input_dim));
  }
  if (weights.size() != spec.param_count()) {
    throw Error(ErrorCode::DimensionMismatch, "MLP has " + std::to_string(spec.param_count()) +
                                                  " weights, got " +
                                                  std::to_string(weights.size()));
  }
  const auto w = spec.widths();
  Vector h = input;
  int pos = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l];
    const int out = w[l + 1];
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        weights.data() + pos, out, in);
    Vector next = m * h + weights.segment(pos + out * in, out);
    pos += out * in + out;
    h = (l + 2 == w.size()) ? next : Vector(next.cwiseMax(0.0));
  }
  return h;
}

NodeId emit_mlp(GraphBuilder& b, const MlpSpec& spec, NodeId weights, int offset, NodeId input) {
  spec.validate();
  const auto w = spec.widths();
  NodeId h = input;
  int pos = offset;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l];
    const int out = w[l + 1];
    NodeId m = b.slice(weights, pos, out * in);
    NodeId bias = b.slice(weights, pos + out * in, out);
    pos += out * in + out;
    NodeId z = b.add(b.matvec(m, h, out, in), bias);
    h = (l + 2 == w.size()) ? z : b.relu(z);
  }
  return h;
}

}  // namespace eqcausal
