#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pwrules/util.hpp"

namespace pwrules::model {

struct ModelConfig {
  int embed_dim = 32;
  int n_layers = 2;
  int n_heads = 4;
  int ff_dim = 128;
  int n_fragments = 1;
  int max_words = 64;
  double dropout = 0.1;
  uint64_t seed = 0;

  void validate() const;
};

// All weights live in a name-keyed tensor map so the optimizer, serializer
// and gradient checks can iterate them uniformly.
struct ModelState {
  ModelConfig cfg;
  std::map<std::string, std::vector<double>> tensors;
  std::map<std::string, std::vector<double>> adam_m;
  std::map<std::string, std::vector<double>> adam_v;
  uint64_t adam_step = 0;
  int epoch = 0;

  std::vector<double>& t(const std::string& name);
  const std::vector<double>& t(const std::string& name) const;
};

ModelState init_model(const ModelConfig& cfg);

struct Batch {
  int B = 0;
  int T = 0;                       // words per sample (padded), CLS excluded
  std::vector<double> emb;         // B*T*D
  std::vector<uint8_t> word_mask;  // B*T, 1 = real word
  std::vector<double> labels;      // B*F
  std::vector<uint8_t> observed;   // B*F, 0 = NA

  void validate(const ModelConfig& cfg) const;
};

// forward activations cached for the backward pass
struct ForwardPass {
  int B = 0, S = 0;                 // S = T + 1 (CLS prepended at 0)
  std::vector<double> logits;       // B*F
  std::vector<double> probs;        // B*F
  // internals (per layer where applicable)
  std::vector<std::vector<double>> x;  // n_layers+1 entries of B*S*D (layer inputs, x[0] incl CLS)
  struct LayerCache {
    std::vector<double> ln1_out, ln1_mean, ln1_rstd;
    std::vector<double> q, k, v;        // B*S*D
    std::vector<double> att;            // B*H*S*S softmax probs
    std::vector<double> ctx;            // B*S*D
    std::vector<double> proj;           // B*S*D
    std::vector<double> drop1;          // dropout keep-scale factors (empty = off)
    std::vector<double> x_mid;          // B*S*D
    std::vector<double> ln2_out, ln2_mean, ln2_rstd;
    std::vector<double> ff_pre;         // B*S*FF
    std::vector<double> ff_act;         // B*S*FF
    std::vector<double> ff_out;         // B*S*D
    std::vector<double> drop2;
  };
  std::vector<LayerCache> layers;
  std::vector<double> cls_ln, cls_mean, cls_rstd;  // B*D, B, B
  std::vector<double> head_pre, head_act;          // B*D
};

ForwardPass forward(const ModelState& state, const Batch& batch, bool training = false,
                    Rng* dropout_rng = nullptr);

// mean BCE-with-logits over observed entries; numerically stable; all-NA
// batches produce 0 with all_na set
double masked_bce_loss(const std::vector<double>& logits, const std::vector<double>& labels,
                       const std::vector<uint8_t>& observed, int B, int F,
                       std::vector<double>* dlogits = nullptr, bool* all_na = nullptr);

struct Gradients {
  std::map<std::string, std::vector<double>> tensors;
  std::vector<double> input_emb;  // B*T*D
};

// exact reverse-mode gradients from dlogits (B*F) through the whole model
Gradients backward(const ModelState& state, const Batch& batch, const ForwardPass& fwd,
                   const std::vector<double>& dlogits);

// probabilities for one protein's word list (eval mode, singleton batch)
std::vector<double> predict(const ModelState& state,
                            const std::vector<std::vector<double>>& words);

// logit value + gradient w.r.t. input embeddings for one output neuron
double logit_with_input_gradient(const ModelState& state,
                                 const std::vector<std::vector<double>>& words,
                                 int fragment_index, std::vector<std::vector<double>>* grad_out);

struct Sample {
  std::string protein_id;
  std::vector<std::vector<double>> words;  // n_words x D
  std::vector<double> labels;              // F
  std::vector<uint8_t> observed;           // F
};

struct TrainConfig {
  double lr = 1e-3;
  double min_lr = 0.0;
  double weight_decay = 1e-5;
  int batch_size = 256;
  int t_max = 20;          // cosine annealing period
  int max_epochs = 600;
  int patience = 60;       // early stop after this many non-improving epochs
  double threshold = 0.5;  // probability threshold for MCC checkpointing
};

double cosine_lr(const TrainConfig& cfg, int epoch);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::vector<double> val_mcc;
};

struct TrainResult {
  ModelState best;   // checkpoint with the highest mean validation MCC
  ModelState final;  // state after the last epoch
  int best_epoch = 0;
  double best_mcc = 0.0;
  std::vector<EpochLog> log;
};

// MCC at the given probability threshold pooled over observed entries
double evaluate_mcc(const ModelState& state, const std::vector<Sample>& samples, double threshold);

TrainResult train(const std::vector<Sample>& train_set,
                  const std::vector<std::vector<Sample>>& val_sets, const ModelConfig& cfg,
                  const TrainConfig& tcfg);

Batch make_batch(const std::vector<Sample>& samples, const std::vector<size_t>& idx,
                 const ModelConfig& cfg);

}  // namespace pwrules::model
