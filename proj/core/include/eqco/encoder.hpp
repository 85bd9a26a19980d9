#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "eqco/math.hpp"

namespace eqco {

struct DenseLayer {
  RealMat weight;  // out x in
  RealVec bias;    // out
};

/// Fully connected ReLU network. The last layer is linear; its output is
/// L2-normalized by `encode`.
struct MlpParams {
  std::vector<DenseLayer> layers;

  /// Layer widths [in, hidden..., out].
  std::vector<std::size_t> dims() const;
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  bool same_shape(const MlpParams& other) const;
  bool all_finite() const;

  static MlpParams zeros_like(const MlpParams& shape);
  /// this += scale * other. Shapes must match.
  void add_scaled(const MlpParams& other, double scale);
  void scale(double factor);
  double squared_norm() const;

  /// Row-major weights then bias, layer by layer.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);
};

/// He-style init: W ~ N(0, 2 / fan_in), b = 0. Requires >= 2 positive dims.
MlpParams init_params(SeededRng& rng, std::span<const std::size_t> layer_dims);

/// Activations kept for the backward pass; one column per sample.
struct ForwardCache {
  std::vector<RealMat> inputs;  // input to each layer
  std::vector<RealMat> pre;     // pre-activation of each layer
  RealMat embeddings;           // normalized outputs
  RealVec output_norms;         // ||z|| per column
};

struct BatchEncoding {
  RealMat embeddings;  // out_dim x n
  ForwardCache cache;
};

struct BatchBackward {
  MlpParams param_grads;  // summed over columns
  RealMat d_inputs;       // in_dim x n
};

/// Encodes each column of `inputs`. Throws NumericError if any raw output is zero.
BatchEncoding encode_batch(const MlpParams& params, const RealMat& inputs);

/// Backpropagates d loss / d embedding (one column per sample) through the
/// normalization Jacobian (I - e e^T) / ||z|| and the network.
BatchBackward encode_batch_backward(const MlpParams& params, const ForwardCache& cache,
                                    const RealMat& d_embeddings);

struct Encoding {
  RealVec embedding;
  ForwardCache cache;
};

struct EncoderGrads {
  MlpParams param_grads;
  RealVec d_input;
};

Encoding encode(const MlpParams& params, const RealVec& x);
EncoderGrads encode_backward(const MlpParams& params, const ForwardCache& cache,
                             const RealVec& d_embedding);

/// EMA key encoder.
struct MomentumEncoder {
  MlpParams params;
  double beta = 0.999;

  void validate() const;
};

/// theta_k <- beta * theta_k + (1 - beta) * theta_q, in place.
void momentum_update(MomentumEncoder& target, const MlpParams& source);

/// Versioned JSON container: layer dims plus row-major fp64 arrays.
/// Serialization is byte-stable for identical parameters.
std::string serialize_params(const MlpParams& params);
MlpParams deserialize_params(const std::string& text);
void save_checkpoint(const MlpParams& params, const std::string& path);
MlpParams load_checkpoint(const std::string& path);

}  // namespace eqco
