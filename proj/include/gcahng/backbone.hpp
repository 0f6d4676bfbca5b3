#pragma once

// Feature extractor F: maps raw inputs to (optionally) L2-normalized
// embeddings. Either an MLP with a linear embedding layer or the identity
// over pre-extracted features.

#include "gcahng/datakit.hpp"
#include "gcahng/nn.hpp"

#include <span>
#include <vector>

namespace gcahng {

enum class BackboneKind { mlp, identity };

struct BackboneConfig {
  BackboneKind kind = BackboneKind::mlp;
  Index input_dim = 64;
  std::vector<Index> hidden_dims = {128};
  Index embed_dim = 64;
  bool normalize = true;

  void validate() const;
};

/// B x D embeddings plus the batch labels and N x m layout.
struct EmbeddingBatch {
  Var z;
  std::vector<int> labels;
  int classes_per_batch = 0;
  int instances_per_class = 0;

  Index size() const { return z.rows(); }
  Index dim() const { return z.cols(); }
};

enum class Mode { train, eval };

class Backbone {
 public:
  Backbone() = default;
  Backbone(BackboneConfig config, Rng& rng);

  /// In eval mode the result carries no gradient path to the parameters.
  EmbeddingBatch embed(const LabeledBatch& batch, Mode mode) const;
  /// Raw matrix entry point (rows are samples).
  Var forward(const Matrix& x, Mode mode) const;
  /// Deterministic eval-mode embedding of a whole matrix.
  Matrix embed_matrix(const Matrix& x) const;

  ParameterList parameters() const;
  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  std::vector<Linear> layers_;  // hidden layers then the embedding layer
};

}  // namespace gcahng
