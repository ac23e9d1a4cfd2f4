#include "dpl/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dpl {

// ---------------------------------------------------------------------------
// Vocab
// ---------------------------------------------------------------------------

Vocab Vocab::build(const std::vector<std::vector<std::string>>& token_lists) {
  std::set<std::string> unique;
  for (const auto& list : token_lists)
    for (const auto& t : list) unique.insert(t);
  Vocab v;
  v.tokens.reserve(unique.size() + 1);
  v.tokens.push_back("<unk>");
  for (const auto& t : unique)
    if (t != "<unk>") v.tokens.push_back(t);
  v.rebuild_index();
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens[0] != "<unk>") throw DplError("vocab must start with <unk>");
  Vocab v;
  v.tokens = std::move(tokens);
  v.rebuild_index();
  return v;
}

void Vocab::rebuild_index() {
  index_.clear();
  for (int i = 0; i < size(); ++i) {
    if (!index_.emplace(tokens[i], i).second) throw DplError("vocab has duplicate token");
  }
}

int Vocab::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 0 : it->second;
}

// ---------------------------------------------------------------------------
// Parameter bundles
// ---------------------------------------------------------------------------

namespace {

void fill_uniform(Mat& m, double lo, double hi, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rand_real(rng, lo, hi);
}

void fill_fan_in(Mat& m, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(m.cols()));
  fill_uniform(m, -bound, bound, rng);
}

}  // namespace

EncoderParams EncoderParams::init(int vocab, int d, int hidden, Rng& rng) {
  if (vocab < 1 || d < 1 || hidden < 1) throw DplError("encoder dims must be positive");
  EncoderParams p;
  p.tok_emb = Mat(vocab, d);
  p.mask_emb = Mat(2, d);
  fill_uniform(p.tok_emb, -0.1, 0.1, rng);
  fill_uniform(p.mask_emb, -0.1, 0.1, rng);
  p.w1 = Mat(hidden, d);
  fill_fan_in(p.w1, rng);
  p.b1 = Vec::Zero(hidden);
  p.w2 = Mat(d, hidden);
  fill_fan_in(p.w2, rng);
  p.b2 = Vec::Zero(d);
  return p;
}

EncoderParams EncoderParams::zeros_like(const EncoderParams& p) {
  EncoderParams z;
  z.tok_emb = Mat::Zero(p.tok_emb.rows(), p.tok_emb.cols());
  z.mask_emb = Mat::Zero(p.mask_emb.rows(), p.mask_emb.cols());
  z.w1 = Mat::Zero(p.w1.rows(), p.w1.cols());
  z.b1 = Vec::Zero(p.b1.size());
  z.w2 = Mat::Zero(p.w2.rows(), p.w2.cols());
  z.b2 = Vec::Zero(p.b2.size());
  return z;
}

void EncoderParams::set_zero() {
  tok_emb.setZero();
  mask_emb.setZero();
  w1.setZero();
  b1.setZero();
  w2.setZero();
  b2.setZero();
}

std::vector<TensorView> EncoderParams::tensors(const std::string& prefix) {
  return {{prefix + "tok_emb", tok_emb.data(), tok_emb.size()},
          {prefix + "mask_emb", mask_emb.data(), mask_emb.size()},
          {prefix + "w1", w1.data(), w1.size()},
          {prefix + "b1", b1.data(), b1.size()},
          {prefix + "w2", w2.data(), w2.size()},
          {prefix + "b2", b2.data(), b2.size()}};
}

std::vector<ConstTensorView> EncoderParams::tensors(const std::string& prefix) const {
  return {{prefix + "tok_emb", tok_emb.data(), tok_emb.size()},
          {prefix + "mask_emb", mask_emb.data(), mask_emb.size()},
          {prefix + "w1", w1.data(), w1.size()},
          {prefix + "b1", b1.data(), b1.size()},
          {prefix + "w2", w2.data(), w2.size()},
          {prefix + "b2", b2.data(), b2.size()}};
}

Mlp Mlp::init(int in, int hidden, int out, Rng& rng) {
  if (in < 1 || hidden < 1 || out < 1) throw DplError("mlp dims must be positive");
  Mlp m;
  m.w1 = Mat(hidden, in);
  fill_fan_in(m.w1, rng);
  m.b1 = Vec::Zero(hidden);
  m.w2 = Mat(out, hidden);
  fill_fan_in(m.w2, rng);
  m.b2 = Vec::Zero(out);
  return m;
}

Mlp Mlp::zeros_like(const Mlp& m) {
  Mlp z;
  z.w1 = Mat::Zero(m.w1.rows(), m.w1.cols());
  z.b1 = Vec::Zero(m.b1.size());
  z.w2 = Mat::Zero(m.w2.rows(), m.w2.cols());
  z.b2 = Vec::Zero(m.b2.size());
  return z;
}

void Mlp::set_zero() {
  w1.setZero();
  b1.setZero();
  w2.setZero();
  b2.setZero();
}

Vec Mlp::forward(const Vec& v) const {
  Vec a = (w1 * v + b1).array().tanh();
  return w2 * a + b2;
}

std::vector<TensorView> Mlp::tensors(const std::string& prefix) {
  return {{prefix + "w1", w1.data(), w1.size()},
          {prefix + "b1", b1.data(), b1.size()},
          {prefix + "w2", w2.data(), w2.size()},
          {prefix + "b2", b2.data(), b2.size()}};
}

std::vector<ConstTensorView> Mlp::tensors(const std::string& prefix) const {
  return {{prefix + "w1", w1.data(), w1.size()},
          {prefix + "b1", b1.data(), b1.size()},
          {prefix + "w2", w2.data(), w2.size()},
          {prefix + "b2", b2.data(), b2.size()}};
}

AdvMode adv_mode_from_name(const std::string& s) {
  if (s == "flip") return AdvMode::flip;
  if (s == "uniform") return AdvMode::uniform;
  throw DplError("unknown adversarial_mode: '" + s + "'");
}

const char* adv_mode_name(AdvMode m) { return m == AdvMode::flip ? "flip" : "uniform"; }

void Hyperparams::validate() const {
  if (alpha < 0 || beta < 0 || lambda < 0)
    throw DplError("hyperparameters alpha, beta, lambda must be non-negative");
}

StudentModel StudentModel::init(Vocab vocab, LabelSpace fine, LabelSpace coarse, int d, int hidden,
                                int predictor_hidden, uint64_t seed) {
  fine.validate();
  coarse.validate();
  StudentModel m;
  m.vocab = std::move(vocab);
  m.fine_space = std::move(fine);
  m.coarse_space = std::move(coarse);
  Rng rng(derive_seed(seed, "model-init"));
  m.enc = EncoderParams::init(m.vocab.size(), d, hidden, rng);
  m.fine_head = Mlp::init(d, predictor_hidden, m.fine_space.size(), rng);
  m.coarse_head = Mlp::init(2 * d, predictor_hidden, m.coarse_space.size(), rng);
  return m;
}

StudentGrad StudentGrad::zeros_like(const StudentModel& m) {
  return {EncoderParams::zeros_like(m.enc), Mlp::zeros_like(m.fine_head),
          Mlp::zeros_like(m.coarse_head)};
}

void StudentGrad::set_zero() {
  enc.set_zero();
  fine_head.set_zero();
  coarse_head.set_zero();
}

namespace {

template <typename Bundle>
auto bundle_tensors(Bundle& b) {
  auto out = b.enc.tensors("enc.");
  for (auto& t : b.fine_head.tensors("fine_head.")) out.push_back(t);
  for (auto& t : b.coarse_head.tensors("coarse_head.")) out.push_back(t);
  return out;
}

}  // namespace

std::vector<TensorView> student_tensors(StudentModel& m) { return bundle_tensors(m); }
std::vector<TensorView> student_tensors(StudentGrad& g) { return bundle_tensors(g); }
std::vector<ConstTensorView> student_tensors(const StudentModel& m) { return bundle_tensors(m); }

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

ModelInput make_input(const Vocab& vocab, const Sentence& sentence, const AspectSpan& span,
                      int fine_label, int coarse_label) {
  if (span.mask.size() != sentence.tokens.size())
    throw DplError("mask length does not match token count for sentence '" + sentence.id + "'");
  ModelInput in;
  in.token_ids.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) in.token_ids.push_back(vocab.id_of(t));
  in.mask = span.mask;
  in.fine_label = fine_label;
  in.coarse_label = coarse_label;
  return in;
}

ModelInput make_input(const Vocab& vocab, const MergedExample& ex) {
  return make_input(vocab, ex.sentence, ex.span, ex.fine_label, ex.coarse_label);
}

std::vector<ModelInput> make_inputs(const Vocab& vocab, const MergedDataset& ds) {
  std::vector<ModelInput> out;
  out.reserve(ds.size());
  for (const auto& r : ds.rows) out.push_back(make_input(vocab, r));
  return out;
}

std::vector<ModelInput> make_inputs(const Vocab& vocab, const FineDataset& ds) {
  std::vector<ModelInput> out;
  out.reserve(ds.size());
  for (const auto& r : ds.rows)
    out.push_back(make_input(vocab, r.sentence, r.span, r.fine_label, -1));
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward primitives
// ---------------------------------------------------------------------------

namespace {

struct EncodeCache {
  const std::vector<int>* token_ids = nullptr;
  std::vector<uint8_t> bits;  // mask actually applied (t or 1-t)
  Vec pooled;
  Vec act;
};

Vec encode_cached(const EncoderParams& enc, const std::vector<int>& ids,
                  std::vector<uint8_t> bits, EncodeCache& cache) {
  if (ids.empty()) throw DplError("cannot encode an empty sentence");
  if (ids.size() != bits.size()) throw DplError("mask length does not match token count");
  const double inv_n = 1.0 / static_cast<double>(ids.size());
  Vec pooled = Vec::Zero(enc.tok_emb.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= enc.vocab_size()) throw DplError("token id out of range");
    pooled += enc.tok_emb.row(ids[i]).transpose();
    pooled += enc.mask_emb.row(bits[i] ? 1 : 0).transpose();
  }
  pooled *= inv_n;
  cache.token_ids = &ids;
  cache.bits = std::move(bits);
  cache.pooled = pooled;
  cache.act = (enc.w1 * pooled + enc.b1).array().tanh();
  return enc.w2 * cache.act + enc.b2;
}

void encode_backward(const EncoderParams& enc, const EncodeCache& cache, const Vec& dout,
                     EncoderParams& grad) {
  grad.w2 += dout * cache.act.transpose();
  grad.b2 += dout;
  Vec da = enc.w2.transpose() * dout;
  Vec dpre = da.array() * (1.0 - cache.act.array().square());
  grad.w1 += dpre * cache.pooled.transpose();
  grad.b1 += dpre;
  Vec dpooled = enc.w1.transpose() * dpre;
  const auto& ids = *cache.token_ids;
  const double inv_n = 1.0 / static_cast<double>(ids.size());
  Vec per_token = dpooled * inv_n;
  for (size_t i = 0; i < ids.size(); ++i) {
    grad.tok_emb.row(ids[i]) += per_token.transpose();
    grad.mask_emb.row(cache.bits[i] ? 1 : 0) += per_token.transpose();
  }
}

struct MlpCache {
  Vec input;
  Vec act;
};

Vec mlp_forward_cached(const Mlp& m, Vec input, MlpCache& cache) {
  cache.act = (m.w1 * input + m.b1).array().tanh();
  Vec logits = m.w2 * cache.act + m.b2;
  cache.input = std::move(input);
  return logits;
}

/// Backprop through the head. `grad` may be null (frozen head); `dinput`
/// may be null when the input path is frozen.
void mlp_backward(const Mlp& m, const MlpCache& cache, const Vec& dlogits, Mlp* grad,
                  Vec* dinput) {
  if (grad) {
    grad->w2 += dlogits * cache.act.transpose();
    grad->b2 += dlogits;
  }
  Vec da = m.w2.transpose() * dlogits;
  Vec dpre = da.array() * (1.0 - cache.act.array().square());
  if (grad) {
    grad->w1 += dpre * cache.input.transpose();
    grad->b1 += dpre;
  }
  if (dinput) *dinput = m.w1.transpose() * dpre;
}

std::vector<uint8_t> complement(const std::vector<uint8_t>& mask) {
  std::vector<uint8_t> out(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 0 : 1;
  return out;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DplError(std::string("non-finite ") + what);
}

void require_nonempty(Batch batch, const char* what) {
  if (batch.empty()) throw DplError(std::string(what) + ": empty batch");
}

}  // namespace

Vec encode(const EncoderParams& enc, const std::vector<int>& token_ids,
           const std::vector<uint8_t>& mask) {
  EncodeCache cache;
  return encode_cached(enc, token_ids, mask, cache);
}

Vec softmax(const Vec& logits) { return log_softmax(logits).array().exp(); }

Vec log_softmax(const Vec& logits) {
  double m = logits.maxCoeff();
  double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

int argmax(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

ForwardResult forward(const EncoderParams& enc, const Mlp& fine_head, const Mlp& coarse_head,
                      const ModelInput& input) {
  ForwardResult r;
  r.z = encode(enc, input.token_ids, input.mask);
  r.h = encode(enc, input.token_ids, complement(input.mask));
  r.fine_dist = softmax(fine_head.forward(r.z));
  Vec hz(r.h.size() + r.z.size());
  hz << r.h, r.z;  // coarse head reads [h ∘ z], h first
  r.coarse_dist = softmax(coarse_head.forward(hz));
  return r;
}

// ---------------------------------------------------------------------------
// Loss terms
// ---------------------------------------------------------------------------

double loss_fine(Batch batch, const StudentModel& m, StudentGrad* grad, double weight) {
  require_nonempty(batch, "loss_fine");
  const double scale = weight / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& row : batch) {
    if (row.fine_label < 0 || row.fine_label >= m.fine_space.size())
      throw DplError("loss_fine: row lacks a fine label");
    EncodeCache zc;
    Vec z = encode_cached(m.enc, row.token_ids, row.mask, zc);
    MlpCache fc;
    Vec logits = mlp_forward_cached(m.fine_head, std::move(z), fc);
    Vec logp = log_softmax(logits);
    total += -logp(row.fine_label);
    if (grad) {
      Vec dlogits = logp.array().exp();
      dlogits(row.fine_label) -= 1.0;
      dlogits *= scale;
      Vec dz;
      mlp_backward(m.fine_head, fc, dlogits, &grad->fine_head, &dz);
      encode_backward(m.enc, zc, dz, grad->enc);
    }
  }
  double mean = total / static_cast<double>(batch.size());
  check_finite(mean, "loss_fine");
  return mean;
}

double loss_coarse(Batch batch, const StudentModel& m, StudentGrad* grad, double weight) {
  require_nonempty(batch, "loss_coarse");
  const double scale = weight / static_cast<double>(batch.size());
  const int d = m.enc.dim();
  double total = 0.0;
  for (const auto& row : batch) {
    if (row.coarse_label < 0 || row.coarse_label >= m.coarse_space.size())
      throw DplError("loss_coarse: row lacks a coarse label");
    EncodeCache zc, hc;
    Vec z = encode_cached(m.enc, row.token_ids, row.mask, zc);
    Vec h = encode_cached(m.enc, row.token_ids, complement(row.mask), hc);
    Vec hz(2 * d);
    hz << h, z;
    MlpCache cc;
    Vec logits = mlp_forward_cached(m.coarse_head, std::move(hz), cc);
    Vec logp = log_softmax(logits);
    total += -logp(row.coarse_label);
    if (grad) {
      Vec dlogits = logp.array().exp();
      dlogits(row.coarse_label) -= 1.0;
      dlogits *= scale;
      Vec dhz;
      mlp_backward(m.coarse_head, cc, dlogits, &grad->coarse_head, &dhz);
      encode_backward(m.enc, hc, dhz.head(d), grad->enc);
      encode_backward(m.enc, zc, dhz.tail(d), grad->enc);
    }
  }
  double mean = total / static_cast<double>(batch.size());
  check_finite(mean, "loss_coarse");
  return mean;
}

double loss_enc(Batch batch, const StudentModel& m, AdvMode mode, StudentGrad* grad,
                double weight) {
  require_nonempty(batch, "loss_enc");
  const int n_fine = m.fine_space.size();
  if (mode == AdvMode::flip && n_fine != 2)
    throw DplError("adversarial flip mode requires a binary fine label space");
  const double scale = weight / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& row : batch) {
    EncodeCache hc;
    Vec h = encode_cached(m.enc, row.token_ids, complement(row.mask), hc);
    MlpCache fc;
    Vec logits = mlp_forward_cached(m.fine_head, std::move(h), fc);
    Vec logp = log_softmax(logits);
    Vec dlogits;
    if (mode == AdvMode::flip) {
      if (row.fine_label < 0 || row.fine_label >= n_fine)
        throw DplError("loss_enc: row lacks a fine label");
      int target = 1 - row.fine_label;
      total += -logp(target);
      if (grad) {
        dlogits = logp.array().exp();
        dlogits(target) -= 1.0;
      }
    } else {
      // Cross-entropy against the uniform distribution; minimum ln C.
      total += -logp.mean();
      if (grad) {
        dlogits = logp.array().exp();
        dlogits.array() -= 1.0 / static_cast<double>(n_fine);
      }
    }
    if (grad) {
      dlogits *= scale;
      Vec dh;
      mlp_backward(m.fine_head, fc, dlogits, nullptr, &dh);  // fine head frozen
      encode_backward(m.enc, hc, dh, grad->enc);
    }
  }
  double mean = total / static_cast<double>(batch.size());
  check_finite(mean, "loss_enc");
  return mean;
}

double loss_dis(Batch batch, const StudentModel& m, StudentGrad* grad, double weight) {
  require_nonempty(batch, "loss_dis");
  const double scale = weight / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& row : batch) {
    if (row.fine_label < 0 || row.fine_label >= m.fine_space.size())
      throw DplError("loss_dis: row lacks a fine label");
    EncodeCache hc;
    Vec h = encode_cached(m.enc, row.token_ids, complement(row.mask), hc);
    MlpCache fc;
    Vec logits = mlp_forward_cached(m.fine_head, std::move(h), fc);
    Vec logp = log_softmax(logits);
    total += -logp(row.fine_label);
    if (grad) {
      Vec dlogits = logp.array().exp();
      dlogits(row.fine_label) -= 1.0;
      dlogits *= scale;
      mlp_backward(m.fine_head, fc, dlogits, &grad->fine_head, nullptr);  // encoder frozen
    }
  }
  double mean = total / static_cast<double>(batch.size());
  check_finite(mean, "loss_dis");
  return mean;
}

double loss_adv(Batch batch, const StudentModel& m, double lambda, AdvMode mode,
                StudentGrad* grad, double weight) {
  if (lambda < 0) throw DplError("loss_adv: lambda must be non-negative");
  double dis = loss_dis(batch, m, grad, weight);
  double enc = loss_enc(batch, m, mode, grad, weight * lambda);
  return dis + lambda * enc;
}

double total_loss(Batch batch, const StudentModel& m, const Hyperparams& hp, StudentGrad* grad) {
  hp.validate();
  double fine = loss_fine(batch, m, grad, 1.0);
  double coarse = loss_coarse(batch, m, grad, hp.alpha);
  double adv = loss_adv(batch, m, hp.lambda, hp.adversarial_mode, grad, hp.beta);
  return fine + hp.alpha * coarse + hp.beta * adv;
}

}  // namespace dpl
