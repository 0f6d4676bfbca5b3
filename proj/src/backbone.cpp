#include "gcahng/backbone.hpp"

#include "gcahng/error.hpp"

#include <string>

namespace gcahng {

void BackboneConfig::validate() const {
  if (embed_dim < 2) throw ConfigError("embed_dim must be >= 2");
  if (input_dim < 1) throw ConfigError("backbone input_dim must be >= 1");
  if (kind == BackboneKind::mlp && hidden_dims.empty())
    throw ConfigError("hidden_dims must be nonempty for the mlp backbone");
  if (kind == BackboneKind::identity && input_dim != embed_dim)
    throw ConfigError("identity backbone requires input_dim == embed_dim");
  for (auto h : hidden_dims)
    if (h < 1) throw ConfigError("hidden_dims entries must be >= 1");
}

Backbone::Backbone(BackboneConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  if (config_.kind == BackboneKind::identity) return;
  Index in = config_.input_dim;
  for (auto h : config_.hidden_dims) {
    layers_.emplace_back(in, h, rng);
    in = h;
  }
  layers_.emplace_back(in, config_.embed_dim, rng);
}

Var Backbone::forward(const Matrix& x, Mode mode) const {
  if (x.cols() != config_.input_dim) {
    throw ShapeError("backbone expects input dim " + std::to_string(config_.input_dim) +
                     ", got " + std::to_string(x.cols()));
  }
  Var h = ad::constant(x);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    h = layers_[k](h);
    if (k + 1 < layers_.size()) h = ad::gelu(h);
  }
  if (config_.normalize) h = ad::l2_normalize_rows(h);
  return mode == Mode::eval ? ad::detach(h) : h;
}

EmbeddingBatch Backbone::embed(const LabeledBatch& batch, Mode mode) const {
  EmbeddingBatch out;
  out.z = forward(batch.x, mode);
  out.labels = batch.labels;
  out.classes_per_batch = batch.classes_per_batch;
  out.instances_per_class = batch.instances_per_class;
  return out;
}

Matrix Backbone::embed_matrix(const Matrix& x) const { return forward(x, Mode::eval).value(); }

ParameterList Backbone::parameters() const {
  ParameterList out;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    layers_[k].collect(out, k + 1 < layers_.size() ? "hidden" + std::to_string(k) : "embed");
  }
  return out;
}

}  // namespace gcahng
