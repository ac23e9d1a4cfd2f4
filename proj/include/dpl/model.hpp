#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpl/corpus.hpp"

namespace dpl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Flat view of one named parameter tensor, for generic iteration
/// (SGD updates, finite-difference checks, serialization).
struct TensorView {
  std::string name;
  double* data;
  Eigen::Index size;
};

struct ConstTensorView {
  std::string name;
  const double* data;
  Eigen::Index size;
};

// ---------------------------------------------------------------------------
// Vocabulary: sorted unique tokens, index 0 reserved for <unk>.
// ---------------------------------------------------------------------------

struct Vocab {
  std::vector<std::string> tokens;  // tokens[0] == "<unk>"

  static Vocab build(const std::vector<std::vector<std::string>>& token_lists);
  static Vocab from_tokens(std::vector<std::string> tokens);  // loads a saved list

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& token) const;  // 0 for unknown

 private:
  std::unordered_map<std::string, int> index_;
  void rebuild_index();
};

// ---------------------------------------------------------------------------
// Encoder: mask-conditioned mean pooling plus a two-layer transform.
// pooled = mean_i(tok_emb[x_i] + mask_emb[m_i]);  out = W2 tanh(W1 pooled + b1) + b2.
// The same weights produce z (aspect mask) and h (complement mask).
// ---------------------------------------------------------------------------

struct EncoderParams {
  Mat tok_emb;   // vocab x d
  Mat mask_emb;  // 2 x d
  Mat w1;        // hidden x d
  Vec b1;        // hidden
  Mat w2;        // d x hidden
  Vec b2;        // d

  int dim() const { return static_cast<int>(w2.rows()); }
  int hidden() const { return static_cast<int>(w1.rows()); }
  int vocab_size() const { return static_cast<int>(tok_emb.rows()); }

  static EncoderParams init(int vocab, int d, int hidden, Rng& rng);
  static EncoderParams zeros_like(const EncoderParams& p);
  void set_zero();

  std::vector<TensorView> tensors(const std::string& prefix = "enc.");
  std::vector<ConstTensorView> tensors(const std::string& prefix = "enc.") const;
};

/// One-hidden-layer MLP head: logits = U2 tanh(U1 v + c1) + c2.
struct Mlp {
  Mat w1;  // hidden x in
  Vec b1;
  Mat w2;  // out x hidden
  Vec b2;

  int in_dim() const { return static_cast<int>(w1.cols()); }
  int out_dim() const { return static_cast<int>(w2.rows()); }

  static Mlp init(int in, int hidden, int out, Rng& rng);
  static Mlp zeros_like(const Mlp& m);
  void set_zero();

  Vec forward(const Vec& v) const;

  std::vector<TensorView> tensors(const std::string& prefix);
  std::vector<ConstTensorView> tensors(const std::string& prefix) const;
};

enum class AdvMode { flip, uniform };

AdvMode adv_mode_from_name(const std::string& s);
const char* adv_mode_name(AdvMode m);

struct Hyperparams {
  double alpha = 1.0;   // coarse-loss weight
  double beta = 0.5;    // adversarial-loss weight
  double lambda = 1.0;  // encoder-vs-discriminator trade-off inside the adversarial pair
  AdvMode adversarial_mode = AdvMode::uniform;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Student: shared encoder, fine predictor on z, coarse predictor on [h ∘ z].
// The fine predictor doubles as the adversarial discriminator on h.
// ---------------------------------------------------------------------------

struct StudentModel {
  Vocab vocab;
  LabelSpace fine_space;
  LabelSpace coarse_space;
  EncoderParams enc;
  Mlp fine_head;    // d -> |fine|
  Mlp coarse_head;  // 2d -> |coarse|

  static StudentModel init(Vocab vocab, LabelSpace fine, LabelSpace coarse, int d, int hidden,
                           int predictor_hidden, uint64_t seed);
};

/// Gradient bundle with the same shapes as the student parameters.
struct StudentGrad {
  EncoderParams enc;
  Mlp fine_head;
  Mlp coarse_head;

  static StudentGrad zeros_like(const StudentModel& m);
  void set_zero();
};

std::vector<TensorView> student_tensors(StudentModel& m);
std::vector<TensorView> student_tensors(StudentGrad& g);
std::vector<ConstTensorView> student_tensors(const StudentModel& m);

// ---------------------------------------------------------------------------
// Model inputs: tokenized rows ready for the encoder.
// ---------------------------------------------------------------------------

struct ModelInput {
  std::vector<int> token_ids;
  std::vector<uint8_t> mask;  // aspect mask t_i
  int fine_label = -1;
  int coarse_label = -1;
};

ModelInput make_input(const Vocab& vocab, const Sentence& sentence, const AspectSpan& span,
                      int fine_label, int coarse_label);
ModelInput make_input(const Vocab& vocab, const MergedExample& ex);
std::vector<ModelInput> make_inputs(const Vocab& vocab, const MergedDataset& ds);
std::vector<ModelInput> make_inputs(const Vocab& vocab, const FineDataset& ds);

using Batch = std::span<const ModelInput>;

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

/// Encode one (tokens, mask) input into a d-vector.
Vec encode(const EncoderParams& enc, const std::vector<int>& token_ids,
           const std::vector<uint8_t>& mask);

struct ForwardResult {
  Vec z;            // encode(x, t)
  Vec h;            // encode(x, 1-t)
  Vec fine_dist;    // softmax(fine_head(z))
  Vec coarse_dist;  // softmax(coarse_head([h ∘ z]))
};

ForwardResult forward(const EncoderParams& enc, const Mlp& fine_head, const Mlp& coarse_head,
                      const ModelInput& input);

Vec softmax(const Vec& logits);
Vec log_softmax(const Vec& logits);
int argmax(const Vec& v);  // ties broken toward the lowest index

// ---------------------------------------------------------------------------
// Loss terms. Each returns the batch-mean loss and, when `grad` is non-null,
// accumulates `weight` times its gradient into the bundle. Freezing is
// structural: loss_dis never writes encoder gradients, loss_enc never writes
// fine-head gradients.
// ---------------------------------------------------------------------------

double loss_fine(Batch batch, const StudentModel& m, StudentGrad* grad = nullptr,
                 double weight = 1.0);
double loss_coarse(Batch batch, const StudentModel& m, StudentGrad* grad = nullptr,
                   double weight = 1.0);
double loss_enc(Batch batch, const StudentModel& m, AdvMode mode, StudentGrad* grad = nullptr,
                double weight = 1.0);
double loss_dis(Batch batch, const StudentModel& m, StudentGrad* grad = nullptr,
                double weight = 1.0);
double loss_adv(Batch batch, const StudentModel& m, double lambda, AdvMode mode,
                StudentGrad* grad = nullptr, double weight = 1.0);
double total_loss(Batch batch, const StudentModel& m, const Hyperparams& hp,
                  StudentGrad* grad = nullptr);

}  // namespace dpl
