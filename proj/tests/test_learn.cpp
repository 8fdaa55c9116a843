#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "fastmra/learn.hpp"
#include "fastmra/synthetic.hpp"
#include "test_util.hpp"

namespace fastmra {
namespace {

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.size());
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i]);
  for (auto& v : p) v /= s;
  return p;
}

// d loss / d logits by central differences through softmax.
std::vector<double> numeric_dlogits(std::vector<double> z, const LossFn& loss, double h = 1e-6) {
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double keep = z[i];
    z[i] = keep + h;
    const double up = loss(softmax(z)).loss;
    z[i] = keep - h;
    const double down = loss(softmax(z)).loss;
    z[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

std::vector<float> random_params(int nc, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> p(parameter_count(nc));
  for (auto& v : p) v = float(rng.uniform(-0.4, 0.4));
  return p;
}

ClassifierInput random_input(std::uint64_t seed) {
  Rng rng(seed);
  ClassifierInput in;
  for (auto& s : in.samples) s = std::uint8_t(rng.below(256));
  return in;
}

TEST(FocalLoss, GammaZeroIsCrossEntropy) {
  Rng rng(1);
  const std::vector<double> ones = {1.0, 1.0};
  for (int t = 0; t < 1000; ++t) {
    const double p = rng.uniform(1e-6, 1.0 - 1e-6);
    const std::vector<double> probs = {p, 1 - p};
    const int label = int(rng.below(2));
    EXPECT_NEAR(focal_loss(probs, label, 0.0, ones).loss, -std::log(probs[std::size_t(label)]), 1e-12);
  }
}

TEST(FocalLoss, WorkedExample) {
  const std::vector<double> probs = {0.1, 0.9};
  const std::vector<double> alpha = {1.0, 1.0};
  const double want = 0.01 * -std::log(0.9);
  EXPECT_NEAR(focal_loss(probs, 1, 2.0, alpha).loss, want, 1e-15);
  EXPECT_NEAR(focal_loss(probs, 1, 2.0, alpha).loss, 1.0536e-3, 1e-7);
}

TEST(FocalLoss, AlphaScalesTrueClassOnly) {
  const std::vector<double> probs = {0.3, 0.7};
  const double base = focal_loss(probs, 0, 2.0, std::vector<double>{1, 1}).loss;
  EXPECT_DOUBLE_EQ(focal_loss(probs, 0, 2.0, std::vector<double>{1.5, 0.5}).loss, 1.5 * base);
}

TEST(FocalLoss, WellClassifiedVanishes) {
  const std::vector<double> probs = {1e-15, 1 - 1e-15};
  EXPECT_LT(focal_loss(probs, 1, 2.0, std::vector<double>{1, 1}).loss, 1e-40);
}

TEST(FocalLoss, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::vector<double> z = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const int label = int(rng.below(2));
    const std::vector<double> alpha = {rng.uniform(0.2, 1.8), rng.uniform(0.2, 1.8)};
    for (double gamma : {0.0, 0.5, 2.0}) {
      const LossFn f = [&](std::span<const double> p) { return focal_loss(p, label, gamma, alpha); };
      const auto analytic = f(softmax(z)).dlogits;
      const auto numeric = numeric_dlogits(z, f);
      for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(analytic[i], numeric[i], 1e-8);
    }
  }
}

TEST(FocalLoss, ClampsZeroProbability) {
  const std::vector<double> probs = {0.0, 1.0};
  const LossResult r = focal_loss(probs, 0, 2.0, std::vector<double>{1, 1});
  EXPECT_TRUE(r.clamped);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, -std::log(1e-12), 1e-6);
}

TEST(FocalLoss, RejectsBadArguments) {
  const std::vector<double> probs = {0.5, 0.5};
  EXPECT_THROW(focal_loss(probs, 2, 2.0, std::vector<double>{1, 1}), PreconditionError);
  EXPECT_THROW(focal_loss(probs, 0, -1.0, std::vector<double>{1, 1}), PreconditionError);
  EXPECT_THROW(focal_loss(probs, 0, 2.0, std::vector<double>{1}), PreconditionError);
}

TEST(MuLoss, UniformLabelHasZeroLossAndGradient) {
  const std::vector<double> soft(4, 0.25);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto p = softmax(std::vector<double>{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4), 0.0});
    const LossResult r = mu_loss(p, soft);
    EXPECT_EQ(r.loss, 0.0);
    for (double g : r.dlogits) EXPECT_EQ(g, 0.0);
  }
}

TEST(MuLoss, OneHotWeighsTwo) {
  const std::vector<double> soft = {0, 0, 1, 0};
  const std::vector<double> probs = {0.1, 0.2, 0.6, 0.1};
  EXPECT_DOUBLE_EQ(mu_loss(probs, soft).loss, 2.0 * -std::log(0.6));
  const std::vector<double> near = {1e-9, 1e-9, 1 - 3e-9, 1e-9};
  EXPECT_LT(mu_loss(near, soft).loss, 1e-8);
}

TEST(MuLoss, WorkedExampleWithUniformPrediction) {
  const Prob4 s = soften_label({100, 100, 100, 50}, 10);
  const std::vector<double> soft(s.begin(), s.end());
  double h = 0;
  for (double v : soft) h -= v * std::log2(v);
  const std::vector<double> probs(4, 0.25);
  EXPECT_NEAR(mu_loss(probs, soft).loss, (2 - h) * std::log(4.0), 1e-12);
}

TEST(MuLoss, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(4), soft(4);
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      z[i] = rng.uniform(-3, 3);
      s += soft[i] = rng.uniform(0, 1);
    }
    for (auto& v : soft) v /= s;
    const LossFn f = [&](std::span<const double> p) { return mu_loss(p, soft); };
    const auto analytic = f(softmax(z)).dlogits;
    const auto numeric = numeric_dlogits(z, f);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(analytic[i], numeric[i], 1e-8);
  }
}

TEST(Network, ShapeCounts) {
  for (int nc : {2, 4}) {
    EXPECT_EQ(parameter_count(nc), 6032u + 33u * std::size_t(nc));
    EXPECT_EQ(forward_macs(nc), 1216512u + 32u * std::uint64_t(nc));
    EXPECT_EQ(init_parameters(nc, 9).size(), parameter_count(nc));
  }
}

TEST(Network, UntrainedModelIsUniform) {
  for (int nc : {2, 4}) {
    Network<float> net(nc);
    const auto p = net.forward(init_parameters(nc, 5), random_input(6));
    for (float v : p) EXPECT_FLOAT_EQ(v, 1.0f / float(nc));
  }
}

TEST(Network, ProbabilitiesSumToOneAndRepeat) {
  Network<double> net(4);
  const auto params32 = random_params(4, 7);
  const std::vector<double> params(params32.begin(), params32.end());
  for (int t = 0; t < 5; ++t) {
    const ClassifierInput in = random_input(100 + std::uint64_t(t));
    const auto p = net.forward(params, in);
    const std::vector<double> first(p.begin(), p.end());
    double s = 0;
    for (double v : first) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    const auto again = net.forward(params, in);
    EXPECT_TRUE(std::equal(first.begin(), first.end(), again.begin()));
  }
}

TEST(Network, RejectsWrongParameterCount) {
  Network<float> net(2);
  std::vector<float> p(10);
  EXPECT_THROW(net.forward(p, ClassifierInput{}), PreconditionError);
  EXPECT_THROW(Network<float>(1), PreconditionError);
}

TEST(GradCheck, FocalLossThroughNetwork) {
  const std::vector<double> alpha = {0.7, 1.3};
  for (int label : {0, 1}) {
    const LossFn f = [&](std::span<const double> p) { return focal_loss(p, label, 2.0, alpha); };
    const GradCheckResult r = grad_check(random_params(2, 11 + std::uint64_t(label)), 2, f, random_input(12), 240);
    EXPECT_GE(r.checked, 200u);
    EXPECT_LT(r.skipped_kinks, r.checked / 10);
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

TEST(GradCheck, MuLossThroughNetwork) {
  const std::vector<double> soft = {0.1, 0.6, 0.25, 0.05};
  const LossFn f = [&](std::span<const double> p) { return mu_loss(p, soft); };
  const GradCheckResult r = grad_check(random_params(4, 13), 4, f, random_input(14), 240);
  EXPECT_GE(r.checked, 200u);
  EXPECT_LT(r.skipped_kinks, r.checked / 10);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, UniformSoftLabelGivesZeroGradient) {
  const auto params32 = random_params(4, 15);
  const std::vector<double> params(params32.begin(), params32.end());
  Network<double> net(4);
  const auto probs = net.forward(params, random_input(16));
  const std::vector<double> soft(4, 0.25);
  const LossResult r = mu_loss(probs, soft);
  std::vector<double> grad(params.size(), 0.0);
  net.backward(params, r.dlogits, grad);
  for (double g : grad) ASSERT_EQ(g, 0.0);
}

TEST(Featurize, ConstantFrames) {
  const Frame f(192, 128, 128, 128, 128);
  const ClassifierInput in = featurize(f, f, f);
  ASSERT_EQ(in.samples.size(), kFeatSize);
  for (std::size_t i = 0; i < kFeatSize; ++i) ASSERT_FLOAT_EQ(in.value(i), 128.0f / 255.0f);
}

TEST(Featurize, ChannelOrderAndTwoByTwoMeans) {
  const Frame x = test::random_frame(192, 128, 1);
  const Frame p = test::random_frame(192, 128, 2);
  const Frame f = test::random_frame(192, 128, 3);
  const ClassifierInput in = featurize(x, p, f);
  const Frame* ch[] = {&x, &p, &f};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kFeatHeight; ++y)
      for (int xx = 0; xx < kFeatWidth; ++xx) {
        const Plane& src = ch[c]->y();
        const int sum = src.at(2 * xx, 2 * y) + src.at(2 * xx + 1, 2 * y) + src.at(2 * xx, 2 * y + 1) +
                        src.at(2 * xx + 1, 2 * y + 1);
        // Round half up on sum / 4.
        const int want = (sum + 2) / 4;
        ASSERT_EQ(in.samples[std::size_t((c * kFeatHeight + y) * kFeatWidth + xx)], want)
            << c << " " << xx << " " << y;
      }
}

TEST(Featurize, FractionalBoxes) {
  // 144x96 -> 96x64: each output covers 1.5 x 1.5 source samples, i.e. 3 x 3
  // half-sample cells.
  const Frame x = test::random_frame(144, 96, 4);
  const ClassifierInput in = featurize(x, x, x);
  for (int y = 0; y < kFeatHeight; ++y)
    for (int xx = 0; xx < kFeatWidth; ++xx) {
      int sum = 0;
      for (int hy = 3 * y; hy < 3 * y + 3; ++hy)
        for (int hx = 3 * xx; hx < 3 * xx + 3; ++hx) sum += x.y().at(hx / 2, hy / 2);
      const int want = int(std::lround(sum / 9.0));
      ASSERT_EQ(in.samples[std::size_t(y * kFeatWidth + xx)], want) << xx << " " << y;
    }
}

TEST(Featurize, DeterministicAndValidated) {
  const Frame a = test::random_frame(208, 112, 5);
  EXPECT_EQ(featurize(a, a, a), featurize(a, a, a));
  const Frame small(80, 64);
  EXPECT_THROW(featurize(small, small, small), PreconditionError);
  const Frame other(192, 128);
  EXPECT_THROW(featurize(a, a, other), PreconditionError);
}

TEST(Checkpoint, RoundTripAndStem) {
  test::TempDir dir("ckpt");
  ClassifierModel m;
  m.variant = ClassifierVariant::Mu;
  m.level = 3;
  m.seed = 77;
  m.params = random_params(4, 21);
  const auto manifest = save_checkpoint(m, dir.path());
  EXPECT_EQ(manifest.filename().string(), "mu_level3.manifest");
  EXPECT_EQ(load_checkpoint(manifest), m);

  m.variant = ClassifierVariant::Bi;
  m.level = 0;
  m.params = random_params(2, 22);
  EXPECT_EQ(load_checkpoint(save_checkpoint(m, dir.path())), m);
  EXPECT_TRUE(std::filesystem::exists(dir / "bi_shared.params"));
  EXPECT_EQ(std::filesystem::file_size(dir / "bi_shared.params"), parameter_count(2) * 4);
}

TEST(Checkpoint, PayloadIsLittleEndianFloat32) {
  test::TempDir dir("ckpt_le");
  ClassifierModel m;
  m.params = init_parameters(2, 1);
  m.params[0] = 1.0f;
  save_checkpoint(m, dir.path());
  const std::string bytes = read_file(dir / "bi_shared.params");
  EXPECT_EQ(bytes.substr(0, 4), std::string("\x00\x00\x80\x3f", 4));
}

TEST(Checkpoint, CorruptionDetected) {
  test::TempDir dir("ckpt_bad");
  ClassifierModel m;
  m.params = random_params(2, 23);
  const auto manifest = save_checkpoint(m, dir.path());
  const auto payload = dir / "bi_shared.params";
  const std::string good = read_file(payload);

  std::string flipped = good;
  flipped[100] = char(flipped[100] ^ 0x01);
  write_file_atomic(payload, flipped);
  EXPECT_THROW(load_checkpoint(manifest), FormatError);

  write_file_atomic(payload, good.substr(0, good.size() - 4));
  EXPECT_THROW(load_checkpoint(manifest), FormatError);

  write_file_atomic(payload, good);
  const std::string text = read_file(manifest);
  std::string wrong_arch = text;
  wrong_arch.replace(wrong_arch.find(kArchitectureId), std::string(kArchitectureId).size(), "mlp");
  write_file_atomic(manifest, wrong_arch);
  EXPECT_THROW(load_checkpoint(manifest), FormatError);

  write_file_atomic(manifest, text);
  EXPECT_NO_THROW(load_checkpoint(manifest));
  std::filesystem::remove(payload);
  EXPECT_THROW(load_checkpoint(manifest), IoError);
}

// Dark flat inputs are "static" (S = 1), bright noisy ones "complex" (S = 8).
std::vector<Example> toy_examples(int per_class) {
  std::vector<Example> out;
  Rng rng(31);
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool complex = i % 2;
    Example e;
    const Prob4 rd = complex ? Prob4{40, 30, 20, 10} : Prob4{10, 20, 30, 40};
    e.label = make_label("seq" + std::to_string(i % 10), i, 1 + (i / 2) % 4, 0, rd, {}, std::uint64_t(i));
    for (auto& s : e.input.samples) s = std::uint8_t(complex ? 128 + rng.below(128) : 20 + rng.below(8));
    out.push_back(std::move(e));
  }
  return out;
}

TEST(Training, LearnsSeparableToyProblem) {
  const auto data = toy_examples(40);
  LossConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 8;
  for (auto v : {ClassifierVariant::Bi, ClassifierVariant::Mu}) {
    const TrainResult r = train(data, v, LevelBinding::Shared, cfg);
    ASSERT_EQ(r.models.models.size(), 1u);
    EXPECT_EQ(r.log.size(), 6u);
    EXPECT_EQ(r.validation.value(), 1.0) << to_string(v);
    EXPECT_LT(r.log.back().train_loss, r.log.front().train_loss);
  }
}

TEST(Training, DeterministicGivenSeed) {
  const auto data = toy_examples(20);
  LossConfig cfg;
  cfg.epochs = 2;
  const TrainResult a = train(data, ClassifierVariant::Mu, LevelBinding::PerLevel, cfg);
  const TrainResult b = train(data, ClassifierVariant::Mu, LevelBinding::PerLevel, cfg);
  ASSERT_EQ(a.models.models.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.models.models[i], b.models.models[i]);
    EXPECT_EQ(a.models.models[i].level, int(i) + 1);
  }
  cfg.seed = 2;
  const TrainResult c = train(data, ClassifierVariant::Mu, LevelBinding::PerLevel, cfg);
  EXPECT_NE(a.models.models[0].params, c.models.models[0].params);
}

TEST(Training, EmptyClassAbortsWithCensus) {
  auto data = toy_examples(10);
  for (auto& e : data) e.label = make_label(e.label.sequence_id, 0, 1, 0, {40, 30, 20, 10}, {}, 0);
  LossConfig cfg;
  cfg.epochs = 1;
  try {
    train(data, ClassifierVariant::Bi, LevelBinding::Shared, cfg);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class 0: 0"), std::string::npos) << e.what();
  }
  EXPECT_THROW(train(data, ClassifierVariant::Mu, LevelBinding::Shared, cfg), DataError);
}

TEST(Training, SplitHoldsOutWholeSequences) {
  const auto data = toy_examples(25);
  const auto held = validation_sequences(data);
  EXPECT_EQ(held.size(), 2u);  // every fifth of ten ids
  const DataSplit s = split_examples(data);
  EXPECT_EQ(s.train.size() + s.validation.size(), data.size());
  for (const Example* e : s.train) EXPECT_EQ(held.count(e->label.sequence_id), 0u);
  for (const Example* e : s.validation) EXPECT_EQ(held.count(e->label.sequence_id), 1u);
}

TEST(Training, AlphaIsInverseFrequencyWithMeanOne) {
  auto data = toy_examples(10);
  data.resize(14);  // 7 of each class
  data.push_back(data[0]);
  data.push_back(data[0]);  // 9 static, 7 complex
  std::vector<const Example*> ptrs;
  for (const auto& e : data) ptrs.push_back(&e);
  const auto a = detail::inverse_frequency_alpha(ClassifierVariant::Bi, ptrs);
  EXPECT_NEAR((a[0] + a[1]) / 2, 1.0, 1e-15);
  EXPECT_NEAR(a[1] / a[0], 9.0 / 7.0, 1e-12);
}

TEST(Prediction, LevelFiveSkipsNetwork) {
  ModelSet set{ClassifierVariant::Mu, LevelBinding::Shared, {}};
  ClassifierModel m;
  m.variant = ClassifierVariant::Mu;
  m.params = init_parameters(4, 1);
  set.models.push_back(m);
  const Frame f(192, 128, 100, 128, 128);
  OpCounter ops;
  const ClassDecision d5 = predict_S(set, f, f, f, 5, &ops);
  EXPECT_EQ(d5.cls, 0);
  EXPECT_FALSE(d5.inferred);
  EXPECT_EQ(ops.total(), 0u);
  const ClassDecision d2 = predict_S(set, f, f, f, 2, &ops);
  EXPECT_TRUE(d2.inferred);
  EXPECT_EQ(d2.cls, 3);  // uniform output: tie resolves to the coarsest class
  EXPECT_EQ(ops.count(OpCategory::ClassifierForward), forward_macs(4));
}

TEST(ModelSetTest, PerLevelLookup) {
  ModelSet set{ClassifierVariant::Bi, LevelBinding::PerLevel, {}};
  for (int l = 1; l <= 4; ++l) {
    ClassifierModel m;
    m.level = l;
    m.params = init_parameters(2, std::uint64_t(l));
    set.models.push_back(m);
  }
  EXPECT_NO_THROW(set.validate());
  EXPECT_EQ(set.for_level(3).level, 3);
  EXPECT_THROW(set.for_level(5), PreconditionError);
  set.models.pop_back();
  EXPECT_THROW(set.validate(), Error);
}

}  // namespace
}  // namespace fastmra
