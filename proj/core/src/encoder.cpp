#include "eqco/encoder.hpp"

#include <cmath>

#include "eqco/errors.hpp"

namespace eqco {

std::vector<std::size_t> MlpParams::dims() const {
  std::vector<std::size_t> out;
  if (layers.empty()) return out;
  out.push_back(static_cast<std::size_t>(layers.front().weight.cols()));
  for (const auto& layer : layers) out.push_back(static_cast<std::size_t>(layer.weight.rows()));
  return out;
}

std::size_t MlpParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t MlpParams::output_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

bool MlpParams::same_shape(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
        layers[i].weight.cols() != other.layers[i].weight.cols() ||
        layers[i].bias.size() != other.layers[i].bias.size()) {
      return false;
    }
  }
  return true;
}

bool MlpParams::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

MlpParams MlpParams::zeros_like(const MlpParams& shape) {
  MlpParams out;
  out.layers.reserve(shape.layers.size());
  for (const auto& layer : shape.layers) {
    out.layers.push_back({RealMat::Zero(layer.weight.rows(), layer.weight.cols()),
                          RealVec::Zero(layer.bias.size())});
  }
  return out;
}

void MlpParams::add_scaled(const MlpParams& other, double scale) {
  if (!same_shape(other)) throw DomainError("MlpParams::add_scaled: shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += scale * other.layers[i].weight;
    layers[i].bias += scale * other.layers[i].bias;
  }
}

void MlpParams::scale(double factor) {
  for (auto& layer : layers) {
    layer.weight *= factor;
    layer.bias *= factor;
  }
}

double MlpParams::squared_norm() const {
  double acc = 0.0;
  for (const auto& layer : layers) acc += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  return acc;
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.push_back(layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias[r]);
  }
  return out;
}

void MlpParams::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) throw DomainError("MlpParams::assign_flat: size mismatch");
  std::size_t at = 0;
  for (auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = values[at++];
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = values[at++];
  }
}

MlpParams init_params(SeededRng& rng, std::span<const std::size_t> layer_dims) {
  if (layer_dims.size() < 2) throw PreconditionError("init_params: need at least two layer dims");
  for (std::size_t d : layer_dims) {
    if (d == 0) throw PreconditionError("init_params: layer dims must be positive");
  }
  MlpParams params;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(layer_dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(layer_dims[l + 1]);
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    DenseLayer layer{RealMat(fan_out, fan_in), RealVec::Zero(fan_out)};
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = std * rng.normal();
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

BatchEncoding encode_batch(const MlpParams& params, const RealMat& inputs) {
  if (params.layers.empty()) throw DomainError("encode: empty network");
  if (static_cast<std::size_t>(inputs.rows()) != params.input_dim()) {
    throw DomainError("encode: input dimension does not match first layer");
  }
  ForwardCache cache;
  cache.inputs.reserve(params.layers.size());
  cache.pre.reserve(params.layers.size());
  RealMat h = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    RealMat a = layer.weight * h;
    a.colwise() += layer.bias;
    cache.inputs.push_back(std::move(h));
    h = (l + 1 < params.layers.size()) ? RealMat(a.cwiseMax(0.0)) : a;
    cache.pre.push_back(std::move(a));
  }
  cache.output_norms = h.colwise().norm().transpose();
  for (Eigen::Index c = 0; c < h.cols(); ++c) {
    const double n = cache.output_norms[c];
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericError("encode: network output is zero or non-finite; cannot normalize");
    }
    h.col(c) /= n;
  }
  cache.embeddings = h;
  return {std::move(h), std::move(cache)};
}

BatchBackward encode_batch_backward(const MlpParams& params, const ForwardCache& cache,
                                    const RealMat& d_embeddings) {
  if (cache.pre.size() != params.layers.size() || cache.embeddings.cols() != d_embeddings.cols() ||
      cache.embeddings.rows() != d_embeddings.rows()) {
    throw DomainError("encode_backward: cache / gradient shape mismatch");
  }
  const RealMat& e = cache.embeddings;
  // Normalization Jacobian: dz = (de - e (e . de)) / ||z||
  const RealVec radial = (e.cwiseProduct(d_embeddings)).colwise().sum().transpose();
  RealMat delta = d_embeddings - e * radial.asDiagonal();
  delta = delta * cache.output_norms.cwiseInverse().asDiagonal();

  BatchBackward out{MlpParams::zeros_like(params), RealMat()};
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    if (l + 1 < params.layers.size()) {
      delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    }
    out.param_grads.layers[l].weight.noalias() = delta * cache.inputs[l].transpose();
    out.param_grads.layers[l].bias = delta.rowwise().sum();
    delta = params.layers[l].weight.transpose() * delta;
  }
  out.d_inputs = std::move(delta);
  return out;
}

Encoding encode(const MlpParams& params, const RealVec& x) {
  auto batch = encode_batch(params, RealMat(x));
  return {RealVec(batch.embeddings.col(0)), std::move(batch.cache)};
}

EncoderGrads encode_backward(const MlpParams& params, const ForwardCache& cache,
                             const RealVec& d_embedding) {
  auto back = encode_batch_backward(params, cache, RealMat(d_embedding));
  return {std::move(back.param_grads), RealVec(back.d_inputs.col(0))};
}

void MomentumEncoder::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("MomentumEncoder: beta must lie in [0, 1]");
}

void momentum_update(MomentumEncoder& target, const MlpParams& source) {
  target.validate();
  if (!target.params.same_shape(source)) throw DomainError("momentum_update: shape mismatch");
  const double beta = target.beta;
  for (std::size_t i = 0; i < source.layers.size(); ++i) {
    auto& dst = target.params.layers[i];
    const auto& src = source.layers[i];
    dst.weight = beta * dst.weight + (1.0 - beta) * src.weight;
    dst.bias = beta * dst.bias + (1.0 - beta) * src.bias;
  }
}

}  // namespace eqco
