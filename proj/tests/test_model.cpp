#include <cmath>
#include <vector>

#include "doctest.h"
#include "dpl/model.hpp"

using namespace dpl;

namespace {

StudentModel tiny_model(uint64_t seed = 5, int d = 2, int hidden = 2, int phidden = 2) {
  Vocab vocab = Vocab::build({{"food", "great", "awful", "service"}});
  return StudentModel::init(vocab, default_fine_space(), default_coarse_space(), d, hidden,
                            phidden, seed);
}

ModelInput row(const StudentModel& m, std::vector<std::string> tokens, std::vector<uint8_t> mask,
               int fine, int coarse) {
  Sentence s{"r", std::move(tokens)};
  ModelInput in;
  for (const auto& t : s.tokens) in.token_ids.push_back(m.vocab.id_of(t));
  in.mask = std::move(mask);
  in.fine_label = fine;
  in.coarse_label = coarse;
  return in;
}

template <typename Views>
double max_abs(const Views& views) {
  double worst = 0.0;
  for (const auto& v : views)
    for (Eigen::Index i = 0; i < v.size; ++i) worst = std::max(worst, std::abs(v.data[i]));
  return worst;
}

// ---------------------------------------------------------------------------
// Independent scalar oracle: plain-loop recomputation of the forward math
// over std::vector copies of the weights.
// ---------------------------------------------------------------------------

using Table = std::vector<std::vector<double>>;

Table to_table(const Mat& m) {
  Table t(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t[r][c] = m(r, c);
  return t;
}

std::vector<double> to_vec(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> oracle_encode(const EncoderParams& enc, const std::vector<int>& ids,
                                  const std::vector<uint8_t>& bits) {
  Table E = to_table(enc.tok_emb), M = to_table(enc.mask_emb);
  Table W1 = to_table(enc.w1), W2 = to_table(enc.w2);
  std::vector<double> b1 = to_vec(enc.b1), b2 = to_vec(enc.b2);
  size_t d = E[0].size(), H = W1.size(), n = ids.size();

  std::vector<double> pool(d, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) pool[j] += E[ids[i]][j] + M[bits[i] ? 1 : 0][j];
  for (size_t j = 0; j < d; ++j) pool[j] /= static_cast<double>(n);

  std::vector<double> a(H);
  for (size_t k = 0; k < H; ++k) {
    double s = b1[k];
    for (size_t j = 0; j < d; ++j) s += W1[k][j] * pool[j];
    a[k] = std::tanh(s);
  }
  std::vector<double> out(d);
  for (size_t j = 0; j < d; ++j) {
    double s = b2[j];
    for (size_t k = 0; k < H; ++k) s += W2[j][k] * a[k];
    out[j] = s;
  }
  return out;
}

std::vector<double> oracle_head(const Mlp& head, const std::vector<double>& v) {
  Table U1 = to_table(head.w1), U2 = to_table(head.w2);
  std::vector<double> c1 = to_vec(head.b1), c2 = to_vec(head.b2);
  std::vector<double> a(U1.size());
  for (size_t k = 0; k < U1.size(); ++k) {
    double s = c1[k];
    for (size_t j = 0; j < v.size(); ++j) s += U1[k][j] * v[j];
    a[k] = std::tanh(s);
  }
  std::vector<double> logits(U2.size());
  for (size_t o = 0; o < U2.size(); ++o) {
    double s = c2[o];
    for (size_t k = 0; k < a.size(); ++k) s += U2[o][k] * a[k];
    logits[o] = s;
  }
  return logits;
}

double oracle_nll(const std::vector<double>& logits, int target) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return -(logits[target] - mx - std::log(z));
}

std::vector<uint8_t> complement_bits(const std::vector<uint8_t>& m) {
  std::vector<uint8_t> out;
  for (auto b : m) out.push_back(b ? 0 : 1);
  return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("vocab is sorted with a reserved unk slot") {
  Vocab v = Vocab::build({{"zeta", "alpha"}, {"mid", "alpha"}});
  REQUIRE(v.size() == 4);
  CHECK(v.tokens[0] == "<unk>");
  CHECK(v.tokens[1] == "alpha");
  CHECK(v.id_of("alpha") == 1);
  CHECK(v.id_of("never-seen") == 0);
}

TEST_CASE("encode is deterministic and maps unknown tokens to unk") {
  StudentModel m = tiny_model();
  ModelInput a = row(m, {"great", "food"}, {0, 1}, 2, 1);
  Vec z1 = encode(m.enc, a.token_ids, a.mask);
  Vec z2 = encode(m.enc, a.token_ids, a.mask);
  CHECK((z1 - z2).cwiseAbs().maxCoeff() == 0.0);

  // An out-of-vocabulary token behaves exactly like <unk>.
  ModelInput b = row(m, {"banquet", "food"}, {0, 1}, 2, 1);
  ModelInput c = row(m, {"<unk>", "food"}, {0, 1}, 2, 1);
  CHECK((encode(m.enc, b.token_ids, b.mask) - encode(m.enc, c.token_ids, c.mask))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("encode rejects a mask of the wrong length") {
  StudentModel m = tiny_model();
  std::vector<int> ids = {1, 2, 3};
  std::vector<uint8_t> bad = {0, 1};
  CHECK_THROWS_AS(encode(m.enc, ids, bad), DplError);
}

TEST_CASE("all-zero transform weights produce the bias pattern") {
  StudentModel m = tiny_model();
  m.enc.w1.setZero();
  m.enc.b1.setZero();
  m.enc.w2.setZero();
  m.enc.b2 << 0.25, -1.5;
  ModelInput a = row(m, {"great", "food"}, {0, 1}, 2, 1);
  ModelInput b = row(m, {"awful", "service", "food"}, {1, 0, 0}, 0, 0);
  Vec za = encode(m.enc, a.token_ids, a.mask);
  Vec zb = encode(m.enc, b.token_ids, b.mask);
  CHECK(za(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(za(1) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK((za - zb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("permuting equal-mask-bit tokens leaves the encoding unchanged") {
  StudentModel m = tiny_model(9, 8, 8, 4);
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = 3 + rand_index(rng, 5);
    std::vector<int> ids;
    std::vector<uint8_t> mask;
    for (size_t i = 0; i < n; ++i) {
      ids.push_back(static_cast<int>(rand_index(rng, m.vocab.size())));
      mask.push_back(static_cast<uint8_t>(rand_index(rng, 2)));
    }
    Vec base = encode(m.enc, ids, mask);

    // Swap two positions with equal mask bits.
    std::vector<size_t> zeros, ones;
    for (size_t i = 0; i < n; ++i) (mask[i] ? ones : zeros).push_back(i);
    auto& bucket = zeros.size() >= 2 ? zeros : ones;
    if (bucket.size() < 2) continue;
    std::swap(ids[bucket[0]], ids[bucket[1]]);
    Vec swapped = encode(m.enc, ids, mask);
    CHECK((base - swapped).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward produces z from the mask and h from its complement") {
  StudentModel m = tiny_model(3, 4, 8, 4);
  ModelInput in = row(m, {"a", "food", "service", "b", "c", "d"}, {0, 1, 1, 0, 0, 0}, 1, 0);
  ForwardResult fwd = forward(m.enc, m.fine_head, m.coarse_head, in);

  CHECK((fwd.z - encode(m.enc, in.token_ids, in.mask)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fwd.h - encode(m.enc, in.token_ids, complement_bits(in.mask))).cwiseAbs().maxCoeff() ==
        0.0);

  CHECK(fwd.fine_dist.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(fwd.coarse_dist.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(fwd.fine_dist.minCoeff() > 0.0);
}

TEST_CASE("coarse head reads [h . z] in that order") {
  StudentModel m = tiny_model(7, 4, 4, 4);
  ModelInput in = row(m, {"great", "food", "awful"}, {0, 1, 0}, 2, 1);
  ForwardResult fwd = forward(m.enc, m.fine_head, m.coarse_head, in);

  Vec hz(8), zh(8);
  hz << fwd.h, fwd.z;
  zh << fwd.z, fwd.h;
  Vec direct = softmax(m.coarse_head.forward(hz));
  Vec swapped = softmax(m.coarse_head.forward(zh));
  CHECK((fwd.coarse_dist - direct).cwiseAbs().maxCoeff() < 1e-15);
  // Asymmetric random weights: swapping the halves changes the logits.
  CHECK((direct - swapped).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("same sentence, different-length spans give different z") {
  StudentModel m = tiny_model(11, 8, 8, 4);
  std::vector<std::string> tokens = {"the", "wine", "list", "and", "soup", "arrived"};
  ModelInput long_span = row(m, tokens, {0, 1, 1, 0, 0, 0}, 2, 1);
  ModelInput short_span = row(m, tokens, {0, 0, 0, 0, 1, 0}, 0, 1);
  Vec z1 = encode(m.enc, long_span.token_ids, long_span.mask);
  Vec z2 = encode(m.enc, short_span.token_ids, short_span.mask);
  CHECK((z1 - z2).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("uniform logits give ln C losses") {
  StudentModel m = tiny_model();
  m.fine_head.w2.setZero();
  m.fine_head.b2.setZero();
  m.coarse_head.w2.setZero();
  m.coarse_head.b2.setZero();
  std::vector<ModelInput> rows = {row(m, {"great", "food"}, {0, 1}, 2, 1),
                                  row(m, {"awful", "service"}, {0, 1}, 0, 0)};
  CHECK(loss_fine(rows, m) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(loss_coarse(rows, m) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss_dis(rows, m) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(loss_enc(rows, m, AdvMode::uniform) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("a predictor emitting the one-hot truth drives the loss to zero") {
  StudentModel m = tiny_model();
  m.fine_head.w1.setZero();
  m.fine_head.w2.setZero();
  m.fine_head.b2.setZero();
  m.fine_head.b2(2) = 50.0;  // logit spike on the true class
  std::vector<ModelInput> rows = {row(m, {"great", "food"}, {0, 1}, 2, 1)};
  CHECK(loss_fine(rows, m) < 1e-9);
}

TEST_CASE("uniform-mode encoder loss is minimized at the uniform distribution") {
  std::vector<ModelInput> rows;
  {
    StudentModel m = tiny_model();
    rows = {row(m, {"great", "food"}, {0, 1}, 2, 1)};
    m.fine_head.w2.setZero();
    m.fine_head.b2.setZero();
    CHECK(loss_enc(rows, m, AdvMode::uniform) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  for (uint64_t s = 1; s <= 20; ++s) {
    StudentModel m = tiny_model(s);
    CHECK(loss_enc(rows, m, AdvMode::uniform) >= std::log(3.0) - 1e-12);
  }
}

TEST_CASE("flip mode flips the binary target and rejects ternary spaces") {
  Vocab vocab = Vocab::build({{"good", "bad"}});
  LabelSpace binary{{"negative", "positive"}};
  StudentModel m = StudentModel::init(vocab, binary, default_coarse_space(), 2, 2, 2, 3);

  ModelInput in;
  in.token_ids = {1, 2};
  in.mask = {0, 1};
  in.fine_label = 1;
  in.coarse_label = 1;
  std::vector<ModelInput> rows = {in};

  // Flip mode scores class 0 when the label is 1: rig the head so class 0
  // has probability ~1 on h and check the loss is ~0.
  m.fine_head.w1.setZero();
  m.fine_head.w2.setZero();
  m.fine_head.b2 << 50.0, 0.0;
  CHECK(loss_enc(rows, m, AdvMode::flip) < 1e-9);

  StudentModel ternary = tiny_model();
  std::vector<ModelInput> trows = {row(ternary, {"great", "food"}, {0, 1}, 2, 1)};
  CHECK_THROWS_AS(loss_enc(trows, ternary, AdvMode::flip), DplError);
}

TEST_CASE("freezing contracts are exact") {
  StudentModel m = tiny_model(17, 6, 8, 4);
  std::vector<ModelInput> rows = {row(m, {"great", "food", "awful"}, {0, 1, 0}, 2, 1),
                                  row(m, {"awful", "service"}, {0, 1}, 0, 0)};

  StudentGrad g = StudentGrad::zeros_like(m);
  loss_dis(rows, m, &g, 1.0);
  CHECK(max_abs(g.enc.tensors()) == 0.0);             // encoder frozen
  CHECK(max_abs(g.coarse_head.tensors("cp.")) == 0.0);
  CHECK(max_abs(g.fine_head.tensors("fp.")) > 0.0);

  g.set_zero();
  loss_enc(rows, m, AdvMode::uniform, &g, 1.0);
  CHECK(max_abs(g.fine_head.tensors("fp.")) == 0.0);  // discriminator frozen
  CHECK(max_abs(g.enc.tensors()) > 0.0);
}

TEST_CASE("loss_adv composes loss_dis and loss_enc") {
  StudentModel m = tiny_model(19, 4, 4, 4);
  std::vector<ModelInput> rows = {row(m, {"great", "food"}, {0, 1}, 2, 1),
                                  row(m, {"awful", "service"}, {0, 1}, 0, 0)};

  double dis = loss_dis(rows, m);
  double enc = loss_enc(rows, m, AdvMode::uniform);
  CHECK(loss_adv(rows, m, 0.0, AdvMode::uniform) == doctest::Approx(dis).epsilon(1e-15));
  CHECK(loss_adv(rows, m, 1.0, AdvMode::uniform) == doctest::Approx(dis + enc).epsilon(1e-12));
  CHECK(loss_adv(rows, m, 0.7, AdvMode::uniform) ==
        doctest::Approx(dis + 0.7 * enc).epsilon(1e-12));

  // The adversarial encoder gradient scales linearly in lambda.
  StudentGrad g_adv = StudentGrad::zeros_like(m);
  loss_adv(rows, m, 0.7, AdvMode::uniform, &g_adv, 1.0);
  StudentGrad g_enc = StudentGrad::zeros_like(m);
  loss_enc(rows, m, AdvMode::uniform, &g_enc, 1.0);
  auto a = g_adv.enc.tensors();
  auto b = g_enc.enc.tensors();
  for (size_t t = 0; t < a.size(); ++t)
    for (Eigen::Index i = 0; i < a[t].size; ++i)
      CHECK(a[t].data[i] == doctest::Approx(0.7 * b[t].data[i]).epsilon(1e-12));
}

TEST_CASE("total loss composition") {
  StudentModel m = tiny_model(23, 4, 4, 4);
  std::vector<ModelInput> rows = {row(m, {"great", "food"}, {0, 1}, 2, 1),
                                  row(m, {"awful", "service"}, {0, 1}, 0, 0)};

  Hyperparams hp;
  hp.alpha = 0.0;
  hp.beta = 0.0;
  CHECK(total_loss(rows, m, hp) == doctest::Approx(loss_fine(rows, m)).epsilon(1e-15));

  hp.alpha = 1.0;
  CHECK(total_loss(rows, m, hp) ==
        doctest::Approx(loss_fine(rows, m) + loss_coarse(rows, m)).epsilon(1e-9));

  hp.alpha = 0.3;
  hp.beta = 0.9;
  hp.lambda = 1.3;
  double expected = loss_fine(rows, m) + 0.3 * loss_coarse(rows, m) +
                    0.9 * (loss_dis(rows, m) + 1.3 * loss_enc(rows, m, hp.adversarial_mode));
  CHECK(total_loss(rows, m, hp) == doctest::Approx(expected).epsilon(1e-12));

  hp.alpha = -1.0;
  CHECK_THROWS_AS(total_loss(rows, m, hp), DplError);
}

TEST_CASE("two-example batches match the independent scalar oracle") {
  StudentModel m = tiny_model(31, 2, 2, 2);
  std::vector<ModelInput> rows = {row(m, {"great", "food"}, {0, 1}, 2, 1),
                                  row(m, {"awful", "service", "food"}, {0, 1, 0}, 0, 0)};

  double expect_fine = 0.0, expect_coarse = 0.0, expect_dis = 0.0;
  for (const auto& r : rows) {
    auto z = oracle_encode(m.enc, r.token_ids, r.mask);
    auto h = oracle_encode(m.enc, r.token_ids, complement_bits(r.mask));
    expect_fine += oracle_nll(oracle_head(m.fine_head, z), r.fine_label);
    std::vector<double> hz = h;
    hz.insert(hz.end(), z.begin(), z.end());
    expect_coarse += oracle_nll(oracle_head(m.coarse_head, hz), r.coarse_label);
    expect_dis += oracle_nll(oracle_head(m.fine_head, h), r.fine_label);
  }
  expect_fine /= 2.0;
  expect_coarse /= 2.0;
  expect_dis /= 2.0;

  CHECK(loss_fine(rows, m) == doctest::Approx(expect_fine).epsilon(1e-12));
  CHECK(loss_coarse(rows, m) == doctest::Approx(expect_coarse).epsilon(1e-12));
  CHECK(loss_dis(rows, m) == doctest::Approx(expect_dis).epsilon(1e-12));
}

TEST_CASE("coarse gradient reaches the encoder through both pathways") {
  StudentModel m = tiny_model(37, 4, 4, 4);
  std::vector<ModelInput> rows = {row(m, {"great", "food", "awful"}, {0, 1, 0}, 2, 1)};

  // Zero the coarse head's weights on one half at a time; the encoder still
  // receives gradient through the remaining pathway.
  StudentModel z_only = m;
  z_only.coarse_head.w1.leftCols(4).setZero();  // ignore h
  StudentGrad g = StudentGrad::zeros_like(m);
  loss_coarse(rows, z_only, &g, 1.0);
  CHECK(max_abs(g.enc.tensors()) > 0.0);

  StudentModel h_only = m;
  h_only.coarse_head.w1.rightCols(4).setZero();  // ignore z
  g.set_zero();
  loss_coarse(rows, h_only, &g, 1.0);
  CHECK(max_abs(g.enc.tensors()) > 0.0);
}

TEST_CASE("fine loss touches only the z-side mask embedding") {
  StudentModel m = tiny_model(41, 4, 4, 4);
  // All-ones mask: the z pass sees only mask row 1, the h pass only row 0.
  ModelInput in = row(m, {"great", "food"}, {1, 1}, 2, 1);
  std::vector<ModelInput> rows = {in};

  StudentGrad g = StudentGrad::zeros_like(m);
  loss_fine(rows, m, &g, 1.0);
  CHECK(g.enc.mask_emb.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.enc.mask_emb.row(1).cwiseAbs().maxCoeff() > 0.0);

  g.set_zero();
  loss_enc(rows, m, AdvMode::uniform, &g, 1.0);  // h pass uses the complement
  CHECK(g.enc.mask_emb.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.enc.mask_emb.row(0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("analytic gradients match central finite differences (spot check)") {
  StudentModel m = tiny_model(43, 4, 6, 4);
  std::vector<ModelInput> rows = {row(m, {"great", "food", "awful"}, {0, 1, 0}, 2, 1),
                                  row(m, {"awful", "service"}, {0, 1}, 0, 0),
                                  row(m, {"food", "awful", "service", "great"}, {1, 0, 0, 0}, 1, 1)};
  Hyperparams hp;
  hp.alpha = 0.8;
  hp.beta = 0.6;
  hp.lambda = 1.2;

  StudentGrad g = StudentGrad::zeros_like(m);
  total_loss(rows, m, hp, &g);

  // The adversarial pair has stop-gradient semantics: loss_dis sees the
  // encoder as a constant and loss_enc sees the fine head as a constant.
  // The finite-difference evaluation pins those frozen inputs at the base
  // point, which is the function the analytic gradient differentiates.
  const StudentModel base = m;
  auto eval_total = [&](const StudentModel& live) {
    double fine = loss_fine(rows, live);
    double coarse = loss_coarse(rows, live);
    StudentModel dis_view = live;
    dis_view.enc = base.enc;
    double dis = loss_dis(rows, dis_view);
    StudentModel enc_view = live;
    enc_view.fine_head = base.fine_head;
    double enc = loss_enc(rows, enc_view, hp.adversarial_mode);
    return fine + hp.alpha * coarse + hp.beta * (dis + hp.lambda * enc);
  };

  const double step = 1e-4;
  auto params = student_tensors(m);
  auto grads = student_tensors(g);
  Rng rng(7);
  for (size_t t = 0; t < params.size(); ++t) {
    for (int probe = 0; probe < 3; ++probe) {
      Eigen::Index i = static_cast<Eigen::Index>(rand_index(rng, params[t].size));
      double saved = params[t].data[i];
      params[t].data[i] = saved + step;
      double up = eval_total(m);
      params[t].data[i] = saved - step;
      double down = eval_total(m);
      params[t].data[i] = saved;
      double fd = (up - down) / (2 * step);
      double analytic = grads[t].data[i];
      CHECK(std::abs(fd - analytic) <=
            1e-6 + 1e-4 * std::max(std::abs(fd), std::abs(analytic)));
    }
  }
}

TEST_CASE("empty batches and poisoned weights raise errors") {
  StudentModel m = tiny_model();
  std::vector<ModelInput> empty;
  CHECK_THROWS_AS(loss_fine(empty, m), DplError);
  CHECK_THROWS_AS(loss_coarse(empty, m), DplError);

  std::vector<ModelInput> rows = {row(m, {"great", "food"}, {0, 1}, 2, 1)};
  m.enc.w2(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(loss_fine(rows, m), DplError);
}

}  // TEST_SUITE
