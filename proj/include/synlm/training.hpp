#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "synlm/model.hpp"
#include "synlm/vocabulary.hpp"

namespace synlm {

struct TrainOptions {
  int steps = 2000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;
  // Stop once the loss over the whole training set drops below this value.
  double target_loss = -1.0;
  // Chunks per step; 0 uses every chunk (full batch).
  int batch_size = 0;
  uint64_t seed = 1;
  std::function<void(int step, double loss)> on_step;
};

struct TrainResult {
  int steps = 0;
  double final_loss = 0.0;
  bool reached_target = false;
  std::vector<double> losses;
};

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon);
  void step(Model& model);
  int steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  int t_ = 0;
  std::map<std::string, std::pair<ad::Mat, ad::Mat>> moments_;
};

// Scales every gradient so the global norm is at most max_norm; returns the
// norm before scaling.
double clip_gradients(Model& model, double max_norm);

// Packs sentences, in order, into document chunks of at most max_len
// positions. Chunks break only between sentences.
std::vector<EncodedSequence> make_chunks(const std::vector<ActionSeq>& sentences, const Model& model, int max_len);

// Throws RuntimeFailure when the loss or a gradient stops being finite.
TrainResult train(Model& model, const std::vector<EncodedSequence>& data, const TrainOptions& opts);

struct Checkpoint {
  std::unique_ptr<Model> model;
  WordVocabulary vocab;
  int step = 0;
};

void save_checkpoint(const std::string& path, const Model& model, const WordVocabulary& vocab, int step);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace synlm
