#include "pwrules/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "pwrules/errors.hpp"

namespace pwrules::model {

namespace {

constexpr double kLnEps = 1e-5;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// y[s,o] = x[s,i] W[i,o] + b[o] over 'rows' positions
void linear_forward(const double* x, const double* w, const double* b, double* y, int rows,
                    int in_dim, int out_dim) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + r * in_dim;
    double* yr = y + r * out_dim;
    for (int o = 0; o < out_dim; ++o) yr[o] = b[o];
    for (int i = 0; i < in_dim; ++i) {
      double xi = xr[i];
      if (xi == 0.0) continue;
      const double* wr = w + i * out_dim;
      for (int o = 0; o < out_dim; ++o) yr[o] += xi * wr[o];
    }
  }
}

void linear_backward(const double* x, const double* w, const double* dy, double* dx, double* dw,
                     double* db, int rows, int in_dim, int out_dim) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + r * in_dim;
    const double* dyr = dy + r * out_dim;
    for (int o = 0; o < out_dim; ++o) db[o] += dyr[o];
    for (int i = 0; i < in_dim; ++i) {
      const double* wr = w + i * out_dim;
      double acc = 0.0;
      double* dwr = dw + i * out_dim;
      for (int o = 0; o < out_dim; ++o) {
        acc += wr[o] * dyr[o];
        dwr[o] += xr[i] * dyr[o];
      }
      if (dx) dx[r * in_dim + i] += acc;
    }
  }
}

void layernorm_forward(const double* x, const double* gamma, const double* beta, double* y,
                       double* mean_out, double* rstd_out, int rows, int dim) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    double mean = 0.0;
    for (int d = 0; d < dim; ++d) mean += xr[d];
    mean /= dim;
    double var = 0.0;
    for (int d = 0; d < dim; ++d) var += (xr[d] - mean) * (xr[d] - mean);
    var /= dim;
    double rstd = 1.0 / std::sqrt(var + kLnEps);
    mean_out[r] = mean;
    rstd_out[r] = rstd;
    double* yr = y + r * dim;
    for (int d = 0; d < dim; ++d) yr[d] = gamma[d] * (xr[d] - mean) * rstd + beta[d];
  }
}

void layernorm_backward(const double* x, const double* gamma, const double* mean,
                        const double* rstd, const double* dy, double* dx, double* dgamma,
                        double* dbeta, int rows, int dim) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    const double* dyr = dy + r * dim;
    double m = mean[r], rs = rstd[r];
    double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
    for (int d = 0; d < dim; ++d) {
      double xhat = (xr[d] - m) * rs;
      double dyg = dyr[d] * gamma[d];
      sum_dyg += dyg;
      sum_dyg_xhat += dyg * xhat;
      dgamma[d] += dyr[d] * xhat;
      dbeta[d] += dyr[d];
    }
    double inv_dim = 1.0 / dim;
    double* dxr = dx + r * dim;
    for (int d = 0; d < dim; ++d) {
      double xhat = (xr[d] - m) * rs;
      double dyg = dyr[d] * gamma[d];
      dxr[d] += rs * (dyg - inv_dim * sum_dyg - xhat * inv_dim * sum_dyg_xhat);
    }
  }
}

std::vector<std::string> tensor_names(const ModelConfig& cfg) {
  std::vector<std::string> names{"cls", "lnf.gamma", "lnf.beta", "head.w1", "head.b1",
                                 "head.w2", "head.b2"};
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string p = "layers." + std::to_string(l) + ".";
    for (const char* n : {"ln1.gamma", "ln1.beta", "attn.wq", "attn.bq", "attn.wk", "attn.bk",
                          "attn.wv", "attn.bv", "attn.wo", "attn.bo", "ln2.gamma", "ln2.beta",
                          "ff.w1", "ff.b1", "ff.w2", "ff.b2"})
      names.push_back(p + n);
  }
  std::sort(names.begin(), names.end());
  return names;
}

size_t tensor_size(const ModelConfig& cfg, const std::string& name) {
  const size_t d = cfg.embed_dim, ff = cfg.ff_dim, f = cfg.n_fragments;
  auto ends_with = [&](const char* suffix) {
    std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  if (name == "cls") return d;
  if (name == "head.w1") return d * d;
  if (name == "head.b1") return d;
  if (name == "head.w2") return d * f;
  if (name == "head.b2") return f;
  if (ends_with("ln1.gamma") || ends_with("ln1.beta") || ends_with("ln2.gamma") ||
      ends_with("ln2.beta") || name == "lnf.gamma" || name == "lnf.beta")
    return d;
  if (ends_with("attn.wq") || ends_with("attn.wk") || ends_with("attn.wv") || ends_with("attn.wo"))
    return d * d;
  if (ends_with("attn.bq") || ends_with("attn.bk") || ends_with("attn.bv") || ends_with("attn.bo"))
    return d;
  if (ends_with("ff.w1")) return d * ff;
  if (ends_with("ff.b1")) return ff;
  if (ends_with("ff.w2")) return ff * d;
  if (ends_with("ff.b2")) return d;
  throw Error(ErrorKind::Value, "unknown tensor '" + name + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim <= 0 || n_heads <= 0 || embed_dim % n_heads != 0)
    throw Error(ErrorKind::Shape, "embed_dim must be divisible by n_heads");
  if (n_fragments < 1) throw Error(ErrorKind::Shape, "n_fragments must be >= 1");
  if (n_layers < 1 || ff_dim < 1 || max_words < 1)
    throw Error(ErrorKind::Shape, "bad model dimensions");
  if (dropout < 0.0 || dropout >= 1.0) throw Error(ErrorKind::Value, "dropout must be in [0,1)");
}

std::vector<double>& ModelState::t(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorKind::Value, "missing tensor '" + name + "'");
  return it->second;
}

const std::vector<double>& ModelState::t(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorKind::Value, "missing tensor '" + name + "'");
  return it->second;
}

ModelState init_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelState s;
  s.cfg = cfg;
  Rng rng(cfg.seed ^ 0x5eedf00dull);
  for (const std::string& name : tensor_names(cfg)) {
    size_t n = tensor_size(cfg, name);
    std::vector<double> v(n, 0.0);
    bool is_gamma = name.find("gamma") != std::string::npos;
    bool is_beta = name.find("beta") != std::string::npos;
    bool is_bias = name.find(".b") != std::string::npos && !is_beta;
    if (is_gamma) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (is_beta || is_bias) {
      // zeros
    } else if (name == "cls") {
      for (double& x : v) x = 0.02 * rng.normal();
    } else {
      // uniform Kaiming-style bound from the input dimension
      size_t fan_in = cfg.embed_dim;
      if (name.find("ff.w2") != std::string::npos) fan_in = cfg.ff_dim;
      double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& x : v) x = rng.uniform(-bound, bound);
    }
    s.tensors[name] = std::move(v);
  }
  return s;
}

void Batch::validate(const ModelConfig& cfg) const {
  if (B <= 0 || T < 0) throw Error(ErrorKind::Shape, "empty batch");
  if (emb.size() != static_cast<size_t>(B) * T * cfg.embed_dim)
    throw Error(ErrorKind::Shape, "embedding buffer size mismatch");
  if (word_mask.size() != static_cast<size_t>(B) * T)
    throw Error(ErrorKind::Shape, "mask size mismatch");
  if (!labels.empty() && labels.size() != static_cast<size_t>(B) * cfg.n_fragments)
    throw Error(ErrorKind::Shape, "label size mismatch");
  if (observed.size() != labels.size()) throw Error(ErrorKind::Shape, "observed size mismatch");
  if (T > cfg.max_words) throw Error(ErrorKind::Shape, "batch exceeds max_words");
}

ForwardPass forward(const ModelState& state, const Batch& batch, bool training, Rng* dropout_rng) {
  const ModelConfig& cfg = state.cfg;
  batch.validate(cfg);
  const int B = batch.B, T = batch.T, D = cfg.embed_dim, H = cfg.n_heads;
  const int S = T + 1, FF = cfg.ff_dim, F = cfg.n_fragments;
  const int hd = D / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const bool use_dropout = training && cfg.dropout > 0.0 && dropout_rng != nullptr;
  const double keep = 1.0 - cfg.dropout;

  ForwardPass fp;
  fp.B = B;
  fp.S = S;
  fp.x.resize(cfg.n_layers + 1);
  fp.layers.resize(cfg.n_layers);

  // prepend CLS at position 0
  const std::vector<double>& cls = state.t("cls");
  fp.x[0].assign(static_cast<size_t>(B) * S * D, 0.0);
  for (int b = 0; b < B; ++b) {
    double* xb = fp.x[0].data() + static_cast<size_t>(b) * S * D;
    for (int d = 0; d < D; ++d) xb[d] = cls[d];
    for (int t = 0; t < T; ++t)
      for (int d = 0; d < D; ++d)
        xb[(t + 1) * D + d] = batch.emb[(static_cast<size_t>(b) * T + t) * D + d];
  }
  auto pos_mask = [&](int b, int s) -> bool {
    return s == 0 || batch.word_mask[static_cast<size_t>(b) * T + (s - 1)] != 0;
  };

  const size_t BSD = static_cast<size_t>(B) * S * D;
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& lc = fp.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    const double* x_in = fp.x[l].data();

    lc.ln1_out.assign(BSD, 0.0);
    lc.ln1_mean.assign(static_cast<size_t>(B) * S, 0.0);
    lc.ln1_rstd.assign(static_cast<size_t>(B) * S, 0.0);
    layernorm_forward(x_in, state.t(p + "ln1.gamma").data(), state.t(p + "ln1.beta").data(),
                      lc.ln1_out.data(), lc.ln1_mean.data(), lc.ln1_rstd.data(), B * S, D);

    lc.q.assign(BSD, 0.0);
    lc.k.assign(BSD, 0.0);
    lc.v.assign(BSD, 0.0);
    linear_forward(lc.ln1_out.data(), state.t(p + "attn.wq").data(), state.t(p + "attn.bq").data(),
                   lc.q.data(), B * S, D, D);
    linear_forward(lc.ln1_out.data(), state.t(p + "attn.wk").data(), state.t(p + "attn.bk").data(),
                   lc.k.data(), B * S, D, D);
    linear_forward(lc.ln1_out.data(), state.t(p + "attn.wv").data(), state.t(p + "attn.bv").data(),
                   lc.v.data(), B * S, D, D);

    lc.att.assign(static_cast<size_t>(B) * H * S * S, 0.0);
    lc.ctx.assign(BSD, 0.0);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        for (int s1 = 0; s1 < S; ++s1) {
          const double* qrow = lc.q.data() + (static_cast<size_t>(b) * S + s1) * D + h * hd;
          double* arow =
              lc.att.data() + ((static_cast<size_t>(b) * H + h) * S + s1) * S;
          double maxv = -1e300;
          for (int s2 = 0; s2 < S; ++s2) {
            if (!pos_mask(b, s2)) continue;
            const double* krow = lc.k.data() + (static_cast<size_t>(b) * S + s2) * D + h * hd;
            double dot = 0.0;
            for (int e = 0; e < hd; ++e) dot += qrow[e] * krow[e];
            dot *= scale;
            arow[s2] = dot;
            maxv = std::max(maxv, dot);
          }
          double denom = 0.0;
          for (int s2 = 0; s2 < S; ++s2) {
            if (!pos_mask(b, s2)) {
              arow[s2] = 0.0;
              continue;
            }
            arow[s2] = std::exp(arow[s2] - maxv);
            denom += arow[s2];
          }
          double* crow = lc.ctx.data() + (static_cast<size_t>(b) * S + s1) * D + h * hd;
          for (int s2 = 0; s2 < S; ++s2) {
            if (arow[s2] == 0.0) continue;
            arow[s2] /= denom;
            const double* vrow = lc.v.data() + (static_cast<size_t>(b) * S + s2) * D + h * hd;
            for (int e = 0; e < hd; ++e) crow[e] += arow[s2] * vrow[e];
          }
        }
      }
    }

    lc.proj.assign(BSD, 0.0);
    linear_forward(lc.ctx.data(), state.t(p + "attn.wo").data(), state.t(p + "attn.bo").data(),
                   lc.proj.data(), B * S, D, D);

    if (use_dropout) {
      lc.drop1.assign(BSD, 0.0);
      for (size_t i = 0; i < BSD; ++i)
        lc.drop1[i] = dropout_rng->next_double() < keep ? 1.0 / keep : 0.0;
    }
    lc.x_mid.assign(BSD, 0.0);
    for (size_t i = 0; i < BSD; ++i) {
      double dp = lc.proj[i] * (use_dropout ? lc.drop1[i] : 1.0);
      lc.x_mid[i] = fp.x[l][i] + dp;
    }

    lc.ln2_out.assign(BSD, 0.0);
    lc.ln2_mean.assign(static_cast<size_t>(B) * S, 0.0);
    lc.ln2_rstd.assign(static_cast<size_t>(B) * S, 0.0);
    layernorm_forward(lc.x_mid.data(), state.t(p + "ln2.gamma").data(),
                      state.t(p + "ln2.beta").data(), lc.ln2_out.data(), lc.ln2_mean.data(),
                      lc.ln2_rstd.data(), B * S, D);

    lc.ff_pre.assign(static_cast<size_t>(B) * S * FF, 0.0);
    linear_forward(lc.ln2_out.data(), state.t(p + "ff.w1").data(), state.t(p + "ff.b1").data(),
                   lc.ff_pre.data(), B * S, D, FF);
    lc.ff_act.assign(static_cast<size_t>(B) * S * FF, 0.0);
    for (size_t i = 0; i < lc.ff_pre.size(); ++i) lc.ff_act[i] = gelu(lc.ff_pre[i]);
    lc.ff_out.assign(BSD, 0.0);
    linear_forward(lc.ff_act.data(), state.t(p + "ff.w2").data(), state.t(p + "ff.b2").data(),
                   lc.ff_out.data(), B * S, FF, D);

    if (use_dropout) {
      lc.drop2.assign(BSD, 0.0);
      for (size_t i = 0; i < BSD; ++i)
        lc.drop2[i] = dropout_rng->next_double() < keep ? 1.0 / keep : 0.0;
    }
    fp.x[l + 1].assign(BSD, 0.0);
    for (size_t i = 0; i < BSD; ++i) {
      double dp = lc.ff_out[i] * (use_dropout ? lc.drop2[i] : 1.0);
      fp.x[l + 1][i] = lc.x_mid[i] + dp;
    }
  }

  // final layer norm on the CLS position, then the MLP head
  fp.cls_ln.assign(static_cast<size_t>(B) * D, 0.0);
  fp.cls_mean.assign(B, 0.0);
  fp.cls_rstd.assign(B, 0.0);
  std::vector<double> cls_states(static_cast<size_t>(B) * D);
  for (int b = 0; b < B; ++b)
    for (int d = 0; d < D; ++d)
      cls_states[static_cast<size_t>(b) * D + d] = fp.x[cfg.n_layers][static_cast<size_t>(b) * S * D + d];
  layernorm_forward(cls_states.data(), state.t("lnf.gamma").data(), state.t("lnf.beta").data(),
                    fp.cls_ln.data(), fp.cls_mean.data(), fp.cls_rstd.data(), B, D);

  fp.head_pre.assign(static_cast<size_t>(B) * D, 0.0);
  linear_forward(fp.cls_ln.data(), state.t("head.w1").data(), state.t("head.b1").data(),
                 fp.head_pre.data(), B, D, D);
  fp.head_act.assign(static_cast<size_t>(B) * D, 0.0);
  for (size_t i = 0; i < fp.head_pre.size(); ++i) fp.head_act[i] = gelu(fp.head_pre[i]);
  fp.logits.assign(static_cast<size_t>(B) * F, 0.0);
  linear_forward(fp.head_act.data(), state.t("head.w2").data(), state.t("head.b2").data(),
                 fp.logits.data(), B, D, F);

  fp.probs.resize(fp.logits.size());
  for (size_t i = 0; i < fp.logits.size(); ++i) fp.probs[i] = sigmoid(fp.logits[i]);
  return fp;
}

double masked_bce_loss(const std::vector<double>& logits, const std::vector<double>& labels,
                       const std::vector<uint8_t>& observed, int B, int F,
                       std::vector<double>* dlogits, bool* all_na) {
  if (logits.size() != static_cast<size_t>(B) * F || labels.size() != logits.size() ||
      observed.size() != logits.size())
    throw Error(ErrorKind::Shape, "loss shape mismatch");
  long n_obs = 0;
  for (uint8_t o : observed) n_obs += o ? 1 : 0;
  if (dlogits) dlogits->assign(logits.size(), 0.0);
  if (all_na) *all_na = (n_obs == 0);
  if (n_obs == 0) return 0.0;

  double loss = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (!observed[i]) continue;
    double z = logits[i], y = labels[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (dlogits) (*dlogits)[i] = (sigmoid(z) - y) / static_cast<double>(n_obs);
  }
  return loss / static_cast<double>(n_obs);
}

Gradients backward(const ModelState& state, const Batch& batch, const ForwardPass& fwd,
                   const std::vector<double>& dlogits) {
  const ModelConfig& cfg = state.cfg;
  const int B = batch.B, T = batch.T, D = cfg.embed_dim, H = cfg.n_heads;
  const int S = T + 1, FF = cfg.ff_dim, F = cfg.n_fragments;
  const int hd = D / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  if (dlogits.size() != static_cast<size_t>(B) * F)
    throw Error(ErrorKind::Shape, "dlogits shape mismatch");

  Gradients g;
  for (const auto& [name, v] : state.tensors) g.tensors[name].assign(v.size(), 0.0);
  const size_t BSD = static_cast<size_t>(B) * S * D;

  // head backward
  std::vector<double> dhead_act(static_cast<size_t>(B) * D, 0.0);
  linear_backward(fwd.head_act.data(), state.t("head.w2").data(), dlogits.data(),
                  dhead_act.data(), g.tensors["head.w2"].data(), g.tensors["head.b2"].data(), B,
                  D, F);
  std::vector<double> dhead_pre(static_cast<size_t>(B) * D, 0.0);
  for (size_t i = 0; i < dhead_pre.size(); ++i)
    dhead_pre[i] = dhead_act[i] * gelu_grad(fwd.head_pre[i]);
  std::vector<double> dcls_ln(static_cast<size_t>(B) * D, 0.0);
  linear_backward(fwd.cls_ln.data(), state.t("head.w1").data(), dhead_pre.data(), dcls_ln.data(),
                  g.tensors["head.w1"].data(), g.tensors["head.b1"].data(), B, D, D);

  // final LN backward over the CLS row
  std::vector<double> cls_states(static_cast<size_t>(B) * D);
  for (int b = 0; b < B; ++b)
    for (int d = 0; d < D; ++d)
      cls_states[static_cast<size_t>(b) * D + d] =
          fwd.x[cfg.n_layers][static_cast<size_t>(b) * S * D + d];
  std::vector<double> dcls_states(static_cast<size_t>(B) * D, 0.0);
  layernorm_backward(cls_states.data(), state.t("lnf.gamma").data(), fwd.cls_mean.data(),
                     fwd.cls_rstd.data(), dcls_ln.data(), dcls_states.data(),
                     g.tensors["lnf.gamma"].data(), g.tensors["lnf.beta"].data(), B, D);

  std::vector<double> dx(BSD, 0.0);
  for (int b = 0; b < B; ++b)
    for (int d = 0; d < D; ++d)
      dx[static_cast<size_t>(b) * S * D + d] = dcls_states[static_cast<size_t>(b) * D + d];

  auto pos_mask = [&](int b, int s) -> bool {
    return s == 0 || batch.word_mask[static_cast<size_t>(b) * T + (s - 1)] != 0;
  };

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& lc = fwd.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    const bool has_drop = !lc.drop1.empty();

    // x_out = x_mid + drop2 * ff_out
    std::vector<double> dff_out(BSD, 0.0);
    for (size_t i = 0; i < BSD; ++i) dff_out[i] = dx[i] * (has_drop ? lc.drop2[i] : 1.0);
    // dx continues to x_mid via the residual (dx unchanged)

    std::vector<double> dff_act(static_cast<size_t>(B) * S * FF, 0.0);
    linear_backward(lc.ff_act.data(), state.t(p + "ff.w2").data(), dff_out.data(), dff_act.data(),
                    g.tensors[p + "ff.w2"].data(), g.tensors[p + "ff.b2"].data(), B * S, FF, D);
    std::vector<double> dff_pre(static_cast<size_t>(B) * S * FF, 0.0);
    for (size_t i = 0; i < dff_pre.size(); ++i)
      dff_pre[i] = dff_act[i] * gelu_grad(lc.ff_pre[i]);
    std::vector<double> dln2(BSD, 0.0);
    linear_backward(lc.ln2_out.data(), state.t(p + "ff.w1").data(), dff_pre.data(), dln2.data(),
                    g.tensors[p + "ff.w1"].data(), g.tensors[p + "ff.b1"].data(), B * S, D, FF);
    // dx (w.r.t. x_mid) accumulates the LN2 path
    layernorm_backward(lc.x_mid.data(), state.t(p + "ln2.gamma").data(), lc.ln2_mean.data(),
                       lc.ln2_rstd.data(), dln2.data(), dx.data(),
                       g.tensors[p + "ln2.gamma"].data(), g.tensors[p + "ln2.beta"].data(), B * S,
                       D);

    // x_mid = x_in + drop1 * proj
    std::vector<double> dproj(BSD, 0.0);
    for (size_t i = 0; i < BSD; ++i) dproj[i] = dx[i] * (has_drop ? lc.drop1[i] : 1.0);

    std::vector<double> dctx(BSD, 0.0);
    linear_backward(lc.ctx.data(), state.t(p + "attn.wo").data(), dproj.data(), dctx.data(),
                    g.tensors[p + "attn.wo"].data(), g.tensors[p + "attn.bo"].data(), B * S, D, D);

    std::vector<double> dq(BSD, 0.0), dk(BSD, 0.0), dv(BSD, 0.0);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        for (int s1 = 0; s1 < S; ++s1) {
          const double* arow = lc.att.data() + ((static_cast<size_t>(b) * H + h) * S + s1) * S;
          const double* dcrow = dctx.data() + (static_cast<size_t>(b) * S + s1) * D + h * hd;
          // softmax backward over valid positions
          double dot_pd = 0.0;
          std::vector<double> dp(S, 0.0);
          for (int s2 = 0; s2 < S; ++s2) {
            if (arow[s2] == 0.0 && !pos_mask(b, s2)) continue;
            const double* vrow = lc.v.data() + (static_cast<size_t>(b) * S + s2) * D + h * hd;
            double* dvrow = dv.data() + (static_cast<size_t>(b) * S + s2) * D + h * hd;
            double dpv = 0.0;
            for (int e = 0; e < hd; ++e) {
              dpv += dcrow[e] * vrow[e];
              dvrow[e] += arow[s2] * dcrow[e];
            }
            dp[s2] = dpv;
            dot_pd += arow[s2] * dpv;
          }
          const double* qrow = lc.q.data() + (static_cast<size_t>(b) * S + s1) * D + h * hd;
          double* dqrow = dq.data() + (static_cast<size_t>(b) * S + s1) * D + h * hd;
          for (int s2 = 0; s2 < S; ++s2) {
            if (!pos_mask(b, s2)) continue;
            double ds = arow[s2] * (dp[s2] - dot_pd) * scale;
            if (ds == 0.0) continue;
            const double* krow = lc.k.data() + (static_cast<size_t>(b) * S + s2) * D + h * hd;
            double* dkrow = dk.data() + (static_cast<size_t>(b) * S + s2) * D + h * hd;
            for (int e = 0; e < hd; ++e) {
              dqrow[e] += ds * krow[e];
              dkrow[e] += ds * qrow[e];
            }
          }
        }
      }
    }

    std::vector<double> dln1(BSD, 0.0);
    linear_backward(lc.ln1_out.data(), state.t(p + "attn.wq").data(), dq.data(), dln1.data(),
                    g.tensors[p + "attn.wq"].data(), g.tensors[p + "attn.bq"].data(), B * S, D, D);
    linear_backward(lc.ln1_out.data(), state.t(p + "attn.wk").data(), dk.data(), dln1.data(),
                    g.tensors[p + "attn.wk"].data(), g.tensors[p + "attn.bk"].data(), B * S, D, D);
    linear_backward(lc.ln1_out.data(), state.t(p + "attn.wv").data(), dv.data(), dln1.data(),
                    g.tensors[p + "attn.wv"].data(), g.tensors[p + "attn.bv"].data(), B * S, D, D);

    // dx currently holds d loss/d x_mid; the residual passes it straight to
    // x_in, and the LN1 path adds on top
    layernorm_backward(fwd.x[l].data(), state.t(p + "ln1.gamma").data(), lc.ln1_mean.data(),
                       lc.ln1_rstd.data(), dln1.data(), dx.data(),
                       g.tensors[p + "ln1.gamma"].data(), g.tensors[p + "ln1.beta"].data(), B * S,
                       D);
  }

  // split x0 gradient into CLS and input embeddings
  g.input_emb.assign(static_cast<size_t>(B) * T * D, 0.0);
  std::vector<double>& dcls = g.tensors["cls"];
  for (int b = 0; b < B; ++b) {
    const double* dxb = dx.data() + static_cast<size_t>(b) * S * D;
    for (int d = 0; d < D; ++d) dcls[d] += dxb[d];
    for (int t = 0; t < T; ++t)
      for (int d = 0; d < D; ++d)
        g.input_emb[(static_cast<size_t>(b) * T + t) * D + d] = dxb[(t + 1) * D + d];
  }
  return g;
}

std::vector<double> predict(const ModelState& state,
                            const std::vector<std::vector<double>>& words) {
  const ModelConfig& cfg = state.cfg;
  Batch b;
  b.B = 1;
  b.T = static_cast<int>(std::min<size_t>(words.size(), cfg.max_words));
  b.emb.assign(static_cast<size_t>(b.T) * cfg.embed_dim, 0.0);
  b.word_mask.assign(b.T, 1);
  for (int t = 0; t < b.T; ++t) {
    if (static_cast<int>(words[t].size()) != cfg.embed_dim)
      throw Error(ErrorKind::Shape, "word embedding dim mismatch");
    std::copy(words[t].begin(), words[t].end(), b.emb.begin() + static_cast<size_t>(t) * cfg.embed_dim);
  }
  ForwardPass fp = forward(state, b, false, nullptr);
  return fp.probs;
}

double logit_with_input_gradient(const ModelState& state,
                                 const std::vector<std::vector<double>>& words, int fragment_index,
                                 std::vector<std::vector<double>>* grad_out) {
  const ModelConfig& cfg = state.cfg;
  if (fragment_index < 0 || fragment_index >= cfg.n_fragments)
    throw Error(ErrorKind::Index, "fragment index out of range");
  Batch b;
  b.B = 1;
  b.T = static_cast<int>(std::min<size_t>(words.size(), cfg.max_words));
  b.emb.assign(static_cast<size_t>(b.T) * cfg.embed_dim, 0.0);
  b.word_mask.assign(b.T, 1);
  for (int t = 0; t < b.T; ++t)
    std::copy(words[t].begin(), words[t].end(), b.emb.begin() + static_cast<size_t>(t) * cfg.embed_dim);
  ForwardPass fp = forward(state, b, false, nullptr);
  double logit = fp.logits[fragment_index];
  if (grad_out) {
    std::vector<double> dlogits(cfg.n_fragments, 0.0);
    dlogits[fragment_index] = 1.0;
    Gradients g = backward(state, b, fp, dlogits);
    grad_out->assign(b.T, std::vector<double>(cfg.embed_dim, 0.0));
    for (int t = 0; t < b.T; ++t)
      for (int d = 0; d < cfg.embed_dim; ++d)
        (*grad_out)[t][d] = g.input_emb[static_cast<size_t>(t) * cfg.embed_dim + d];
  }
  return logit;
}

double cosine_lr(const TrainConfig& cfg, int epoch) {
  double span = cfg.lr - cfg.min_lr;
  return cfg.min_lr +
         0.5 * span * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / cfg.t_max));
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<size_t>& idx,
                 const ModelConfig& cfg) {
  Batch b;
  b.B = static_cast<int>(idx.size());
  int maxw = 0;
  for (size_t i : idx)
    maxw = std::max(maxw, static_cast<int>(std::min<size_t>(samples[i].words.size(), cfg.max_words)));
  b.T = maxw;
  b.emb.assign(static_cast<size_t>(b.B) * b.T * cfg.embed_dim, 0.0);
  b.word_mask.assign(static_cast<size_t>(b.B) * b.T, 0);
  b.labels.assign(static_cast<size_t>(b.B) * cfg.n_fragments, 0.0);
  b.observed.assign(static_cast<size_t>(b.B) * cfg.n_fragments, 0);
  for (int bi = 0; bi < b.B; ++bi) {
    const Sample& s = samples[idx[bi]];
    int nw = static_cast<int>(std::min<size_t>(s.words.size(), cfg.max_words));
    for (int t = 0; t < nw; ++t) {
      if (static_cast<int>(s.words[t].size()) != cfg.embed_dim)
        throw Error(ErrorKind::Shape, "word embedding dim mismatch in sample " + s.protein_id);
      b.word_mask[static_cast<size_t>(bi) * b.T + t] = 1;
      std::copy(s.words[t].begin(), s.words[t].end(),
                b.emb.begin() + (static_cast<size_t>(bi) * b.T + t) * cfg.embed_dim);
    }
    if (s.labels.size() != static_cast<size_t>(cfg.n_fragments) ||
        s.observed.size() != static_cast<size_t>(cfg.n_fragments))
      throw Error(ErrorKind::Shape, "label vector size mismatch in sample " + s.protein_id);
    std::copy(s.labels.begin(), s.labels.end(),
              b.labels.begin() + static_cast<size_t>(bi) * cfg.n_fragments);
    std::copy(s.observed.begin(), s.observed.end(),
              b.observed.begin() + static_cast<size_t>(bi) * cfg.n_fragments);
  }
  return b;
}

double evaluate_mcc(const ModelState& state, const std::vector<Sample>& samples,
                    double threshold) {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  for (const Sample& s : samples) {
    std::vector<double> probs = predict(state, s.words);
    for (int f = 0; f < state.cfg.n_fragments; ++f) {
      if (!s.observed[f]) continue;
      bool call = probs[f] >= threshold;
      bool truth = s.labels[f] >= 0.5;
      if (call && truth)
        ++tp;
      else if (call && !truth)
        ++fp;
      else if (!call && truth)
        ++fn;
      else
        ++tn;
    }
  }
  double denom = std::sqrt(static_cast<double>(tp + fp)) * std::sqrt(static_cast<double>(tp + fn)) *
                 std::sqrt(static_cast<double>(tn + fp)) * std::sqrt(static_cast<double>(tn + fn));
  if (denom == 0.0) return 0.0;
  return (static_cast<double>(tp) * tn - static_cast<double>(fp) * fn) / denom;
}

namespace {

void adam_step(ModelState& state, const Gradients& g, double lr, const TrainConfig& tcfg) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  state.adam_step += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.adam_step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.adam_step));
  for (auto& [name, param] : state.tensors) {
    const std::vector<double>& grad = g.tensors.at(name);
    std::vector<double>& m = state.adam_m[name];
    std::vector<double>& v = state.adam_v[name];
    if (m.size() != param.size()) m.assign(param.size(), 0.0);
    if (v.size() != param.size()) v.assign(param.size(), 0.0);
    for (size_t i = 0; i < param.size(); ++i) {
      double gi = grad[i] + tcfg.weight_decay * param[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
}

}  // namespace

TrainResult train(const std::vector<Sample>& train_set,
                  const std::vector<std::vector<Sample>>& val_sets, const ModelConfig& cfg,
                  const TrainConfig& tcfg) {
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "empty training set");
  ModelState state = init_model(cfg);
  Rng rng(cfg.seed ^ 0x7261696eull);

  TrainResult result;
  result.best = state;
  result.best_mcc = -2.0;
  int stale = 0;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    double lr = cosine_lr(tcfg, epoch);
    rng.shuffle(order);

    double loss_sum = 0.0;
    long n_batches = 0;
    for (size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      std::vector<size_t> idx(order.begin() + start,
                              order.begin() + std::min(order.size(), start + tcfg.batch_size));
      Batch batch = make_batch(train_set, idx, cfg);
      ForwardPass fp = forward(state, batch, true, &rng);
      std::vector<double> dlogits;
      double loss =
          masked_bce_loss(fp.logits, batch.labels, batch.observed, batch.B, cfg.n_fragments,
                          &dlogits, nullptr);
      if (!std::isfinite(loss)) throw Error(ErrorKind::Divergence, "training loss non-finite");
      loss_sum += loss;
      ++n_batches;
      Gradients g = backward(state, batch, fp, dlogits);
      adam_step(state, g, lr, tcfg);
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = n_batches ? loss_sum / n_batches : 0.0;
    double mcc_sum = 0.0;
    for (const auto& vs : val_sets) {
      double m = evaluate_mcc(state, vs, tcfg.threshold);
      log.val_mcc.push_back(m);
      mcc_sum += m;
    }
    double mean_mcc = val_sets.empty() ? -1.0 : mcc_sum / static_cast<double>(val_sets.size());
    result.log.push_back(log);

    if (mean_mcc > result.best_mcc + 1e-12) {
      result.best_mcc = mean_mcc;
      result.best = state;
      result.best.epoch = epoch;
      result.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
      if (stale >= tcfg.patience) break;
    }
    state.epoch = epoch + 1;
  }
  result.final = std::move(state);
  return result;
}

}  // namespace pwrules::model
