#pragma once

#include <cstdint>
#include <vector>

#include "hgcl/config.hpp"
#include "hgcl/harness/backbone.hpp"
#include "hgcl/harness/dataset.hpp"
#include "hgcl/hhcl.hpp"
#include "hgcl/saam.hpp"

namespace hgcl::harness {

/// All trainable tensors of the classifier model.
struct ModelParams {
  BackboneParams backbone;
  saam::SaamParams saam;  // left empty when SAAM is disabled
  Tensor classifier_w;    // C x K
  Tensor classifier_b;    // 1 x K

  /// Visit every tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    backbone.visit(f);
    if (!saam.context.empty()) saam.visit(f);
    f(classifier_w), f(classifier_b);
  }
};

struct BatchOutput {
  Var loss;    // CE + alpha * hhcl
  Var ce;
  hhcl::HhclTerms hhcl;  // zeros when alpha = 0
  Var logits;  // B x K
  std::vector<Var> incidence;  // per sample, N x M; empty without SAAM
  std::vector<Var> params;     // bound parameters, ModelParams::visit order
};

/// Backbone, optional SAAM, mean-pooled linear classifier and the training loss.
class Model {
 public:
  explicit Model(const ExperimentConfig& config);

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const BackboneShape& backbone_shape() const { return backbone_; }
  std::size_t final_tokens() const { return backbone_.tokens(backbone_.stages() - 1); }

  /// Record a batch forward pass. With `trainable` the parameters are tape
  /// variables; otherwise they are constants and the hierarchy terms are
  /// skipped, so `loss` is the plain cross-entropy.
  BatchOutput forward(Tape& tape, const std::vector<const Sample*>& batch, bool trainable) const;

  /// Refined N x C tokens and leaf region features (M x C) of one sample.
  struct SampleOutput {
    Var refined;
    Var leaves;
    Var incidence;  // invalid (tape == nullptr) without SAAM
  };
  SampleOutput forward_sample(Tape& tape, const BackboneVars& backbone,
                              const saam::SaamVars* saam, const Sample& sample) const;

 private:
  ExperimentConfig config_;
  BackboneShape backbone_;
  saam::SaamShape saam_shape_;
  ModelParams params_;
  Tensor partition_;  // M x N region averaging matrix used without SAAM
};

/// M x N matrix averaging contiguous row-major blocks of N / M tokens.
Tensor region_partition(std::size_t tokens, std::size_t regions);

/// Rows whose argmax equals the sample label (first maximum wins).
std::size_t count_correct(const Tensor& logits, const std::vector<const Sample*>& batch);

}  // namespace hgcl::harness
