#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "pmoe/attention.hpp"
#include "pmoe/hide/stream.hpp"
#include "pmoe/norga.hpp"

namespace pmoe::hide {

struct BackboneConfig {
  std::size_t heads = 2;
  std::size_t pretrain_epochs = 30;
  std::size_t batch = 32;
  double lr = 0.01;
};

/// One residual multi-head attention layer, frozen after pretraining.
/// f(x, p) = mean over tokens of (x + MSA_p(x)).
class Backbone {
 public:
  explicit Backbone(MsaParams msa);

  /// Supervised training of the attention layer plus a throwaway linear head
  /// on `base`, then freeze.
  static Backbone pretrain(const TaskData& base, std::size_t num_classes, const BackboneConfig& cfg,
                           std::uint64_t seed);

  std::size_t dim() const { return msa_.d_model(); }
  const MsaParams& msa() const noexcept { return msa_; }

  /// Uninstructed representation, 1 × d.
  Tensor encode(const Tensor& x) const;
  /// Instructed representation; `gate` applies NoRGa to the prompt scores.
  Tensor encode(const Tensor& x, const Prefix& prompt, const NorgaGate* gate) const;

 private:
  MsaParams msa_;
};

}  // namespace pmoe::hide
