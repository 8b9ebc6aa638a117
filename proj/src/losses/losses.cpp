#include "fsw/losses/losses.hpp"

#include <cmath>

#include "fsw/errors.hpp"

namespace fsw::losses {

void LossWeights::validate() const {
  if (lambda_id < 0 || lambda_ap < 0 || lambda_adv < 0 || lambda_clip < 0)
    throw ConfigMismatch("loss weights must be non-negative");
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "w_clips") return Ablation::w_clips;
  if (s == "clip_wo_text") return Ablation::clip_wo_text;
  if (s == "clip_wo_id") return Ablation::clip_wo_id;
  if (s == "wo_clips") return Ablation::wo_clips;
  throw ConfigMismatch("unknown loss ablation '" + s + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::w_clips: return "w_clips";
    case Ablation::clip_wo_text: return "clip_wo_text";
    case Ablation::clip_wo_id: return "clip_wo_id";
    case Ablation::wo_clips: return "wo_clips";
  }
  return "?";
}

GanObjective gan_objective_from_string(const std::string& s) {
  if (s == "lsgan") return GanObjective::lsgan;
  if (s == "hinge") return GanObjective::hinge;
  if (s == "bce") return GanObjective::bce;
  throw ConfigMismatch("unknown gan objective '" + s + "'");
}

namespace {

Tensor as_rows(const Tensor& v) {
  if (v.ndim() == 1) return reshape(v, {1, v.dim(0)});
  if (v.ndim() == 2) return v;
  throw ShapeMismatch("expected a vector or [N,D] batch, got " + v.value().shape_str());
}

void check_image_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.ndim() != 4 || b.ndim() != 4 || a.shape() != b.shape())
    throw ShapeMismatch(std::string(what) + ": image shapes disagree: " + a.value().shape_str() + " vs " +
                        b.value().shape_str());
}

}  // namespace

Tensor cosine_distance_loss(const Tensor& a, const Tensor& b) {
  Tensor ar = as_rows(a), br = as_rows(b);
  return mean(sub(Tensor::scalar(1.0), cosine_similarity_rows(ar, br)));
}

Tensor id_swap_loss(const Tensor& x_ts, const Tensor& x_s, enc::ImageBackend& identity) {
  Tensor c_s = identity.encode(x_s.detach());
  Tensor c_ts = identity.encode(x_ts);
  return cosine_distance_loss(c_s, c_ts);
}

Tensor masked_recon_loss(const Tensor& x_ts, const Tensor& x_t, const Tensor& mask) {
  check_image_pair(x_ts, x_t, "masked_recon_loss");
  if (mask.ndim() != 4 || mask.dim(0) != x_t.dim(0) || mask.dim(1) != 1 || mask.dim(2) != x_t.dim(2) ||
      mask.dim(3) != x_t.dim(3))
    throw ShapeMismatch("mask must be [N,1,H,W] matching the images, got " + mask.value().shape_str());
  Tensor inv = sub(Tensor::scalar(1.0), mask.detach());
  return mean(abs(mul(inv, sub(x_ts, x_t))));
}

Tensor cycle_loss(const Tensor& x_tst, const Tensor& x_t) {
  check_image_pair(x_tst, x_t, "cycle_loss");
  return mean(abs(sub(x_tst, x_t)));
}

Tensor perceptual_loss(const Tensor& x_ts, const Tensor& x_t, enc::PerceptualBackend& backend) {
  check_image_pair(x_ts, x_t, "perceptual_loss");
  auto fa = backend.features(x_ts);
  auto fb = backend.features(x_t.detach());
  Tensor acc = Tensor::scalar(0.0);
  for (size_t i = 0; i < fa.size(); ++i) acc = add(acc, mean(abs(sub(fa[i], fb[i]))));
  return mul(acc, 1.0 / static_cast<double>(fa.size()));
}

Tensor attribute_preserving_loss(const Tensor& x_ts, const Tensor& x_tst, const Tensor& x_t,
                                 const Tensor& mask, enc::PerceptualBackend& backend) {
  return add(add(masked_recon_loss(x_ts, x_t, mask), cycle_loss(x_tst, x_t)),
             perceptual_loss(x_ts, x_t, backend));
}

ClipTextResult clip_text_loss(const Tensor& x_ts, const Tensor& x_t, const std::vector<std::string>& captions,
                              enc::ImageBackend& clip_image, enc::TextBackend& clip_text) {
  check_image_pair(x_ts, x_t, "clip_text_loss");
  const int n = x_ts.dim(0);
  if (static_cast<int>(captions.size()) != n)
    throw ShapeMismatch("clip_text_loss: need one caption per sample");
  // text branch is data: stack the per-caption embeddings as a constant
  Array text({n, clip_text.output_dim()});
  for (int r = 0; r < n; ++r) {
    Tensor e = clip_text.encode(captions[static_cast<size_t>(r)]);
    for (int j = 0; j < clip_text.output_dim(); ++j)
      text[static_cast<int64_t>(r) * clip_text.output_dim() + j] = e.value()[j];
  }
  Tensor t_emb = Tensor::constant(std::move(text));

  Tensor s_swap = cosine_similarity_rows(clip_image.encode(x_ts), t_emb);
  Tensor s_tgt = cosine_similarity_rows(clip_image.encode(x_t.detach()), t_emb);

  // the gate compares current values and carries no gradient
  ClipTextResult res;
  Array gate({n});
  int active = 0;
  res.tau.resize(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    const bool open = s_tgt.value()[r] > s_swap.value()[r];
    gate[r] = open ? 1.0 : 0.0;
    res.tau[static_cast<size_t>(r)] = open ? 1 : 0;
    active += open ? 1 : 0;
  }
  res.tau_active_fraction = static_cast<double>(active) / n;
  res.loss = mean(mul(Tensor::constant(std::move(gate)), sub(Tensor::scalar(1.0), s_swap)));
  return res;
}

Tensor clip_id_loss(const Tensor& x_ts, const Tensor& x_s, enc::ImageBackend& clip_image) {
  Tensor e_ts = clip_image.encode(x_ts);
  Tensor e_s = clip_image.encode(x_s.detach());
  return cosine_distance_loss(e_ts, e_s);
}

std::pair<Tensor, Tensor> adversarial_losses(const Tensor& real_logits, const Tensor& fake_logits,
                                             GanObjective objective) {
  if (real_logits.shape() != fake_logits.shape())
    throw ShapeMismatch("adversarial_losses: logits shapes disagree: " + real_logits.value().shape_str() +
                        " vs " + fake_logits.value().shape_str());
  switch (objective) {
    case GanObjective::lsgan: {
      Tensor g = mean(square(sub(fake_logits, Tensor::scalar(1.0))));
      Tensor d = mul(add(mean(square(sub(real_logits, Tensor::scalar(1.0)))), mean(square(fake_logits))), 0.5);
      return {g, d};
    }
    case GanObjective::hinge: {
      Tensor g = neg(mean(fake_logits));
      Tensor d = add(mean(relu(sub(Tensor::scalar(1.0), real_logits))),
                     mean(relu(add(fake_logits, 1.0))));
      return {g, d};
    }
    case GanObjective::bce: {
      Tensor g = mean(softplus(neg(fake_logits)));
      Tensor d = add(mean(softplus(neg(real_logits))), mean(softplus(fake_logits)));
      return {g, d};
    }
  }
  throw ConfigMismatch("unreachable gan objective");
}

std::pair<Tensor, LossBreakdown> combine_total(const TotalLossInputs& in, const LossWeights& w, Ablation ablation) {
  w.validate();
  auto val = [](const Tensor& t) { return t.defined() ? t.item() : 0.0; };
  const bool use_text = text_term_enabled(ablation) && in.clip_text.defined();
  const bool use_cid = id_term_enabled(ablation) && in.clip_id.defined();

  LossBreakdown b;
  b.id = val(in.id);
  b.rec = val(in.rec);
  b.cycle = val(in.cycle);
  b.percept = val(in.percept);
  b.adv_g = val(in.adv_g);
  b.clip_text = use_text ? in.clip_text.item() : 0.0;
  b.clip_id = use_cid ? in.clip_id.item() : 0.0;
  b.tau_active_fraction = use_text ? in.tau_active_fraction : 0.0;

  Tensor total = Tensor::scalar(0.0);
  if (in.id.defined()) total = add(total, mul(in.id, w.lambda_id));
  Tensor ap = Tensor::scalar(0.0);
  bool has_ap = false;
  for (const Tensor* t : {&in.rec, &in.cycle, &in.percept})
    if (t->defined()) {
      ap = add(ap, *t);
      has_ap = true;
    }
  if (has_ap) total = add(total, mul(ap, w.lambda_ap));
  if (in.adv_g.defined()) total = add(total, mul(in.adv_g, w.lambda_adv));
  if (use_text) total = add(total, mul(in.clip_text, w.lambda_clip));
  if (use_cid) total = add(total, mul(in.clip_id, w.lambda_clip));

  b.total = total.item();
  return {total, b};
}

}  // namespace fsw::losses
