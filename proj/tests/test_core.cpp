#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "armflow/checkpoint.hpp"
#include "armflow/gradcheck.hpp"
#include "armflow/nn.hpp"
#include "armflow/optim.hpp"
#include "armflow/rng.hpp"
#include "armflow/sha256.hpp"

using namespace armflow;
using namespace armflow::nn;

namespace {

Mat mat2(std::initializer_list<std::initializer_list<double>> rows) {
  Mat m(int(rows.size()), int(rows.begin()->size()));
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("rng: counter draws are order independent and in range") {
  Rng rng(42);
  const double a = rng.uniform(7);
  const double b = rng.uniform(3);
  CHECK(rng.uniform(7) == a);
  CHECK(rng.uniform(3) == b);
  CHECK(a != b);
  double acc = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(uint64_t(i));
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    acc += u;
  }
  CHECK(acc / 10000.0 == doctest::Approx(0.5).epsilon(0.02));
  // derived streams differ
  CHECK(rng.derive("a").uniform(0) != rng.derive("b").uniform(0));
}

TEST_CASE("sha256 known vectors") {
  CHECK(Sha256::of_string("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(Sha256::of_string("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::string long_msg(1000000, 'a');
  CHECK(Sha256::of_string(long_msg) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("elementwise ops and reductions") {
  Tensor a = Tensor::from_mat(mat2({{1, 2}, {3, 4}}));
  Tensor b = Tensor::from_mat(mat2({{5, 6}, {7, 8}}));
  CHECK(add(a, b).value()(1, 1) == 12.0);
  CHECK(sub(b, a).value()(0, 0) == 4.0);
  CHECK(mul(a, b).value()(1, 0) == 21.0);
  CHECK(scale(a, 2.0).value()(0, 1) == 4.0);
  CHECK(sum(a).value()(0, 0) == 10.0);
  CHECK(mean(a).value()(0, 0) == 2.5);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), ShapeMismatch);
}

TEST_CASE("matmul and transpose") {
  Tensor a = Tensor::from_mat(mat2({{1, 2, 3}, {4, 5, 6}}));
  Tensor b = Tensor::from_mat(mat2({{1, 0}, {0, 1}, {1, 1}}));
  Mat y = matmul(a, b).value();
  CHECK(y(0, 0) == 4.0);
  CHECK(y(1, 1) == 11.0);
  CHECK(transpose(a).value()(2, 1) == 6.0);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(3);
  Tensor x = Tensor::randn({40, 17}, rng);
  Mat y = softmax_rows(x).value();
  for (int i = 0; i < y.rows(); ++i) CHECK(std::abs(y.row(i).sum() - 1.0) <= 1e-12);
}

TEST_CASE("forward passes are bitwise deterministic") {
  Rng rng(11);
  Tensor x = Tensor::randn({8, 16}, rng);
  ParamStore ps;
  auto block = attention_block_declare(ps, "blk", 16, 32, rng);
  const Mat y1 = attention_block(block, x, x, 2, 4).value();
  const Mat y2 = attention_block(block, x, x, 2, 4).value();
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-finite forward is a hard error") {
  Tensor a = Tensor::from_mat(mat2({{1e308, 1e308}}));
  CHECK_THROWS_AS(mul(a, a), NonFinite);
}

TEST_CASE("masked cross entropy: uniform logits give ln V") {
  Tensor logits = Tensor::zeros({2, 4}, true);
  Tensor loss = masked_cross_entropy(logits, {1, 3}, {1.0, 1.0});
  CHECK(loss.value()(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(loss.value()(0, 0) == doctest::Approx(1.386294).epsilon(1e-6));
}

TEST_CASE("masked cross entropy: +20 margin on target is near zero") {
  Mat m = Mat::Zero(3, 5);
  for (int i = 0; i < 3; ++i) m(i, i) = 20.0;
  Tensor logits = Tensor::from_mat(m);
  Tensor loss = masked_cross_entropy(logits, {0, 1, 2}, {1.0, 1.0, 1.0});
  CHECK(loss.value()(0, 0) < 1e-8);
}

TEST_CASE("masked cross entropy: all-masked and bad targets") {
  Tensor logits = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(masked_cross_entropy(logits, {0, 1}, {0.0, 0.0}), AllMasked);
  CHECK_THROWS_AS(masked_cross_entropy(logits, {0, 4}, {1.0, 1.0}), ShapeMismatch);
  CHECK_THROWS_AS(masked_cross_entropy(logits, {0}, {1.0, 1.0}), ShapeMismatch);
}

TEST_CASE("masked cross entropy ignores masked-out rows") {
  Rng rng(5);
  Tensor logits = Tensor::randn({4, 6}, rng);
  Tensor l_masked = masked_cross_entropy(logits, {1, 2, 3, 4}, {1.0, 0.0, 1.0, 0.0});
  Tensor sub_logits = concat_rows({slice_rows(logits, 0, 1), slice_rows(logits, 2, 1)});
  Tensor l_sub = masked_cross_entropy(sub_logits, {1, 3}, {1.0, 1.0});
  CHECK(l_masked.value()(0, 0) == doctest::Approx(l_sub.value()(0, 0)).epsilon(1e-14));
}

TEST_CASE("cosine similarity endpoints") {
  Tensor u = Tensor::from_mat(mat2({{1, 2, 3}}));
  CHECK(cosine_similarity(u, u).value()(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  Tensor a = Tensor::from_mat(mat2({{1, 0}}));
  Tensor b = Tensor::from_mat(mat2({{0, 1}}));
  CHECK(cosine_similarity(a, b).value()(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
  Tensor c = Tensor::from_mat(mat2({{-2, 0}}));
  CHECK(cosine_similarity(a, c).value()(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  Tensor z = Tensor::zeros({1, 2});
  CHECK_THROWS_AS(cosine_similarity(a, z), ZeroNorm);
}

TEST_CASE("attention with one key returns the value row") {
  // identity projections, single key: softmax weight is exactly 1
  ParamStore ps;
  Rng rng(0);
  auto p = attn_declare(ps, "a", 4, 4, 4, rng);
  p.q.w.leaf_value() = Mat::Identity(4, 4);
  p.k.w.leaf_value() = Mat::Identity(4, 4);
  p.v.w.leaf_value() = Mat::Identity(4, 4);
  p.o.w.leaf_value() = Mat::Identity(4, 4);
  Tensor q = Tensor::from_mat(mat2({{9, -3, 0.5, 2}}));
  Tensor kv = Tensor::from_mat(mat2({{1, 2, 3, 4}}));
  Mat out = multi_head_attention(p, q, kv, 1, 2).value();
  for (int j = 0; j < 4; ++j) CHECK(out(0, j) == doctest::Approx(kv.value()(0, j)).epsilon(1e-14));
}

TEST_CASE("attention block shape contract") {
  ParamStore ps;
  Rng rng(7);
  auto block = attention_block_declare(ps, "blk", 16, 32, rng);
  Tensor q = Tensor::randn({5, 16}, rng.derive("q"));
  Tensor kv = Tensor::randn({32, 16}, rng.derive("kv"));
  Tensor y = attention_block(block, q, kv, 1, 4);
  CHECK(y.rows() == 5);
  CHECK(y.cols() == 16);
  CHECK_THROWS_AS(attention_block(block, q, kv, 1, 5), HeadDivisibility);
}

TEST_CASE("attention output is invariant to key/value duplication") {
  ParamStore ps;
  Rng rng(13);
  auto block = attention_block_declare(ps, "blk", 8, 16, rng);
  Tensor q = Tensor::randn({3, 8}, rng.derive("q"));
  Tensor kv = Tensor::randn({6, 8}, rng.derive("kv"));
  Mat dup(12, 8);
  dup << kv.value(), kv.value();
  Tensor kv2 = Tensor::from_mat(dup);
  Mat y1 = attention_block(block, q, kv, 1, 2).value();
  Mat y2 = attention_block(block, q, kv2, 1, 2).value();
  CHECK((y1 - y2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("grad check: |Wx|^2 matches finite differences") {
  ParamStore ps;
  Rng rng(21);
  Tensor& w = ps.normal("w", {3, 3}, rng, 1.0);
  const Tensor x = Tensor::randn({3, 1}, rng.derive("x"));
  auto loss_fn = [&]() {
    Tensor y = matmul(w, x);
    return sum(mul(y, y));
  };
  GradReport rep = grad_check(loss_fn, ps, 1e-5, 16);
  REQUIRE(rep.entries.size() == 1);
  CHECK(rep.entries[0].coords_checked == 9);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("grad check: frozen parameters are absent from the report") {
  ParamStore ps;
  Rng rng(22);
  ps.normal("w", {2, 2}, rng, 1.0);
  ps.normal("frozen/u", {2, 2}, rng, 1.0);
  ps.freeze_prefix("frozen/");
  const Tensor x = Tensor::randn({2, 1}, rng.derive("x"));
  auto loss_fn = [&]() {
    Tensor y = matmul(ps.at("w"), matmul(ps.at("frozen/u"), x));
    return sum(mul(y, y));
  };
  GradReport rep = grad_check(loss_fn, ps, 1e-5);
  REQUIRE(rep.entries.size() == 1);
  CHECK(rep.entries[0].name == "w");
}

TEST_CASE("grad check: composite attention + layer norm + losses") {
  ParamStore ps;
  Rng rng(31);
  auto block = attention_block_declare(ps, "blk", 8, 16, rng);
  const Tensor x = Tensor::randn({6, 8}, rng.derive("x"));
  const Mat target = Tensor::randn({6, 8}, rng.derive("t")).value();
  const Mat mask = Mat::Ones(6, 8);
  auto loss_fn = [&]() {
    Tensor y = attention_block(block, x, x, 2, 2);
    return mse_masked_mean(y, target, mask);
  };
  GradReport rep = grad_check(loss_fn, ps, 1e-5, 6);
  CHECK(rep.max_rel_err < 1e-6);
  CHECK(rep.entries.size() == ps.size());
}

TEST_CASE("grad check: cross entropy and cosine gradients") {
  ParamStore ps;
  Rng rng(37);
  ps.normal("w", {5, 7}, rng, 0.7);
  const Tensor x = Tensor::randn({4, 5}, rng.derive("x"));
  auto ce_fn = [&]() {
    Tensor logits = matmul(x, ps.at("w"));
    return masked_cross_entropy(logits, {0, 3, 6, 2}, {1.0, 0.5, 0.0, 2.0});
  };
  CHECK(grad_check(ce_fn, ps, 1e-5, 12).max_rel_err < 1e-5);

  ParamStore ps2;
  ps2.normal("u", {1, 6}, rng, 1.0);
  ps2.normal("v", {1, 6}, rng, 1.0);
  auto cos_fn = [&]() { return cosine_similarity(ps2.at("u"), ps2.at("v")); };
  CHECK(grad_check(cos_fn, ps2, 1e-5, 12).max_rel_err < 1e-5);

  ParamStore ps3;
  ps3.normal("f", {3, 6}, rng, 1.0);
  const Mat g = Tensor::randn({3, 6}, rng.derive("g")).value();
  auto nc_fn = [&]() { return neg_cosine_mean(ps3.at("f"), g); };
  CHECK(grad_check(nc_fn, ps3, 1e-5, 18).max_rel_err < 1e-5);
}

TEST_CASE("grad check flags nondeterministic losses") {
  ParamStore ps;
  Rng rng(41);
  ps.normal("w", {2, 2}, rng, 1.0);
  int calls = 0;
  auto loss_fn = [&]() {
    ++calls;
    Tensor noise = Tensor::scalar(double(calls));
    return mul(sum(ps.at("w")), noise);
  };
  CHECK_THROWS_AS(grad_check(loss_fn, ps, 1e-5), NonDeterministicLoss);
}

TEST_CASE("optimizer: frozen params bitwise unchanged, others converge") {
  ParamStore ps;
  Rng rng(51);
  ps.normal("w", {4, 4}, rng, 1.0);
  ps.normal("frozen/e", {4, 4}, rng, 1.0);
  ps.freeze_prefix("frozen/");
  const std::string h0 = ps.hash_prefix("frozen/");

  AdamW::Config cfg;
  cfg.lr = 0.05;
  cfg.total_steps = 300;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  double last = 1e30;
  for (int i = 0; i < 300; ++i) {
    ps.zero_grads();
    Tensor loss = sum(mul(ps.at("w"), ps.at("w")));
    loss.backward();
    opt.step(ps);
    last = loss.value()(0, 0);
  }
  CHECK(last < 1e-4);
  CHECK(ps.hash_prefix("frozen/") == h0);
}

TEST_CASE("checkpoint round trip is byte identical") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "armflow_ckpt_test";
  fs::create_directories(dir);

  ParamStore ps;
  Rng rng(61);
  ps.normal("trunk/w", {8, 8}, rng, 0.3);
  ps.normal("encoder/e", {4, 8}, rng, 0.3);
  ps.freeze_prefix("encoder/");
  std::map<std::string, Mat> aux{{"opt/m", Mat::Ones(2, 2)}};
  nlohmann::ordered_json meta;
  meta["note"] = "t";

  const std::string i1 = (dir / "a.index.json").string();
  const std::string b1 = (dir / "a.bin").string();
  save_checkpoint(i1, b1, ps, aux, meta);

  Checkpoint ck = load_checkpoint(i1, b1);
  CHECK(ck.params.is_frozen("encoder/e"));
  CHECK(ck.params.at("trunk/w").value() == ps.at("trunk/w").value());
  CHECK(ck.aux.at("opt/m") == aux.at("opt/m"));

  const std::string i2 = (dir / "b.index.json").string();
  const std::string b2 = (dir / "b.bin").string();
  save_checkpoint(i2, b2, ck.params, ck.aux, ck.meta);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(i1) == slurp(i2));
  CHECK(slurp(b1) == slurp(b2));
  fs::remove_all(dir);
}

TEST_CASE("dropout only perturbs training mode and keeps eval deterministic") {
  ParamStore ps;
  Rng rng(71);
  auto p = attn_declare(ps, "a", 8, 8, 8, rng);
  Tensor q = Tensor::randn({4, 8}, rng.derive("q"));
  Tensor kv = Tensor::randn({4, 8}, rng.derive("kv"));
  Mat eval1 = multi_head_attention(p, q, kv, 1, 2, 0.2, false).value();
  Mat eval2 = multi_head_attention(p, q, kv, 1, 2, 0.2, false).value();
  CHECK((eval1 - eval2).cwiseAbs().maxCoeff() == 0.0);
  Mat tr1 = multi_head_attention(p, q, kv, 1, 2, 0.5, true, Rng(1)).value();
  Mat tr1_again = multi_head_attention(p, q, kv, 1, 2, 0.5, true, Rng(1)).value();
  Mat tr2 = multi_head_attention(p, q, kv, 1, 2, 0.5, true, Rng(2)).value();
  CHECK((tr1 - tr1_again).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tr1 - tr2).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("pack/gather/pool ops round trip with gradients") {
  ParamStore ps;
  Rng rng(81);
  ps.normal("state", {2, 4}, rng, 1.0);
  ps.normal("act", {6, 4}, rng, 1.0);
  ps.normal("fut", {2, 4}, rng, 1.0);
  auto loss_fn = [&]() {
    Tensor seq = pack_sequence(ps.at("state"), ps.at("act"), ps.at("fut"), 2);
    Tensor acts = gather_per_sample(seq, 2, 6, 1, 3);
    Tensor pooled = pool_pairs(acts);
    return mean(mul(pooled, pooled));
  };
  Tensor seq = pack_sequence(ps.at("state"), ps.at("act"), ps.at("fut"), 2);
  CHECK(seq.rows() == 12);
  // sample 1 rows: [state1, act3..5, fut0..1]
  CHECK(seq.value().row(6) == ps.at("state").value().row(1));
  CHECK(seq.value().row(7) == ps.at("act").value().row(3));
  CHECK(seq.value().row(10) == ps.at("fut").value().row(0));
  CHECK(grad_check(loss_fn, ps, 1e-6, 8).max_rel_err < 1e-7);
}

TEST_CASE("no-grad guard stops graph construction") {
  ParamStore ps;
  Rng rng(91);
  ps.normal("w", {3, 3}, rng, 1.0);
  Tensor x = Tensor::randn({3, 1}, rng.derive("x"));
  {
    NoGradGuard guard;
    Tensor y = sum(matmul(ps.at("w"), x));
    CHECK_FALSE(y.requires_grad());
  }
  Tensor y = sum(matmul(ps.at("w"), x));
  CHECK(y.requires_grad());
}
