#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fsw/core/tensor.hpp"
#include "fsw/encoders/backends.hpp"

namespace fsw::losses {

struct LossWeights {
  double lambda_id = 10.0;
  double lambda_ap = 0.5;
  double lambda_adv = 1.0;
  double lambda_clip = 1.0;
  void validate() const;
};

/// Which CLIP-supervision terms participate (the four-way ablation grid).
enum class Ablation { w_clips, clip_wo_text, clip_wo_id, wo_clips };
Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);
inline bool text_term_enabled(Ablation a) { return a == Ablation::w_clips || a == Ablation::clip_wo_id; }
inline bool id_term_enabled(Ablation a) { return a == Ablation::w_clips || a == Ablation::clip_wo_text; }

enum class GanObjective { lsgan, hinge, bce };
GanObjective gan_objective_from_string(const std::string& s);

struct LossBreakdown {
  double id = 0, rec = 0, cycle = 0, percept = 0, adv_g = 0, clip_text = 0, clip_id = 0, total = 0;
  double tau_active_fraction = 0;
};

/// Mean over rows of 1 - cos(a_i, b_i). Operands [N,D] (or [D]).
Tensor cosine_distance_loss(const Tensor& a, const Tensor& b);

/// Identity transfer: cosine distance between frozen-encoder embeddings of
/// the swapped face and the source. Only the swapped branch carries
/// gradient.
Tensor id_swap_loss(const Tensor& x_ts, const Tensor& x_s, enc::ImageBackend& identity);

/// L1 outside the face region: mean of |(1-m) * (x_ts - x_t)| over all
/// elements. Mask is [N,1,H,W] with values in {0,1}.
Tensor masked_recon_loss(const Tensor& x_ts, const Tensor& x_t, const Tensor& mask);

Tensor cycle_loss(const Tensor& x_tst, const Tensor& x_t);

/// Mean L1 over corresponding feature layers, averaged across layers.
Tensor perceptual_loss(const Tensor& x_ts, const Tensor& x_t, enc::PerceptualBackend& backend);

/// masked_recon + cycle + perceptual, unweighted.
Tensor attribute_preserving_loss(const Tensor& x_ts, const Tensor& x_tst, const Tensor& x_t,
                                 const Tensor& mask, enc::PerceptualBackend& backend);

struct ClipTextResult {
  Tensor loss;                   // scalar, batch mean of gated distances
  double tau_active_fraction;    // mean of the per-sample gate
  std::vector<int> tau;          // per-sample gate values
};

/// Caption-consistency term, active per sample only when the swap matches
/// the target's caption worse than the target itself does (strict
/// inequality; the comparison carries no gradient).
ClipTextResult clip_text_loss(const Tensor& x_ts, const Tensor& x_t, const std::vector<std::string>& captions,
                              enc::ImageBackend& clip_image, enc::TextBackend& clip_text);

/// Visual identity consistency in CLIP space; source branch detached.
Tensor clip_id_loss(const Tensor& x_ts, const Tensor& x_s, enc::ImageBackend& clip_image);

/// Patch-level adversarial pair -> (generator loss, discriminator loss).
/// Least-squares objective by default.
std::pair<Tensor, Tensor> adversarial_losses(const Tensor& real_logits, const Tensor& fake_logits,
                                             GanObjective objective = GanObjective::lsgan);

/// Term tensors for the weighted total; leave a tensor undefined when its
/// ablation switch removes it.
struct TotalLossInputs {
  Tensor id, rec, cycle, percept, adv_g, clip_text, clip_id;
  double tau_active_fraction = 0;
};

/// Weighted recombination; returns the scalar graph plus the per-term
/// numeric breakdown (with ablated terms forced to zero).
std::pair<Tensor, LossBreakdown> combine_total(const TotalLossInputs& in, const LossWeights& w, Ablation ablation);

}  // namespace fsw::losses
