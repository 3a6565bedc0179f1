#include <gtest/gtest.h>

#include "pptdetect/fusion.hpp"

using namespace pptdetect;
using namespace pptdetect::fusion;

namespace {

LabeledFeatures toy_set(std::size_t n, std::uint64_t seed, const FusionConfig& cfg) {
  Rng rng(seed);
  LabeledFeatures out;
  for (std::size_t i = 0; i < n; ++i) {
    bool phish = i % 2 == 0;
    std::vector<double> emb(6);
    for (double& v : emb) v = rng.uniform(-1, 1);
    traitnet::PPTScore s{phish ? rng.uniform(0.7, 1.0) : rng.uniform(0.0, 0.3), rng.uniform01(), rng.uniform01()};
    out.features.push_back(build_features("e" + std::to_string(i), emb, &s, cfg));
    out.categories.push_back(phish ? corpus::Category::kPhish : corpus::Category::kLegit);
  }
  return out;
}

FusionConfig quick() {
  FusionConfig c;
  c.hidden = {8};
  c.train.learning_rate = 0.01;
  c.train.max_epochs = 60;
  c.train.patience = 20;
  c.train.batch_size = 16;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Features, WidthsFollowMask) {
  std::vector<double> emb(768, 0.25);
  traitnet::PPTScore s{0.9, 0.8, 0.1};
  FusionConfig full;
  auto f = build_features("x", emb, &s, full);
  EXPECT_EQ(f.values.size(), 771u);
  EXPECT_EQ(f.values[768], 0.9);
  EXPECT_EQ(f.values[770], 0.1);

  FusionConfig no_urgency;
  no_urgency.trait_mask = {Trait::kDesire, Trait::kFear};
  auto g = build_features("x", emb, &s, no_urgency);
  EXPECT_EQ(g.values.size(), 770u);
  EXPECT_EQ(g.values[768], 0.8);  // canonical order regardless of listing order
  EXPECT_EQ(g.appended, (std::vector<Trait>{Trait::kFear, Trait::kDesire}));

  FusionConfig none;
  none.include_ppt = false;
  auto h = build_features("x", emb, nullptr, none);
  EXPECT_EQ(h.values.size(), 768u);
  EXPECT_TRUE(h.appended.empty());
}

TEST(Features, MissingOrOutOfRangeScore) {
  std::vector<double> emb(4, 0.0);
  EXPECT_THROW(build_features("x", emb, nullptr, FusionConfig{}), ValidationError);
  traitnet::PPTScore bad{1.5, 0, 0};
  EXPECT_THROW(build_features("x", emb, &bad, FusionConfig{}), ValidationError);
}

TEST(Features, EachMaskedTraitDropsOneColumn) {
  std::vector<double> emb(768, 0.0);
  traitnet::PPTScore s{0.5, 0.5, 0.5};
  for (int mask = 0; mask < 8; ++mask) {
    FusionConfig c;
    c.trait_mask.clear();
    for (int t = 0; t < 3; ++t)
      if (mask & (1 << t)) c.trait_mask.push_back(static_cast<Trait>(t));
    EXPECT_EQ(build_features("x", emb, &s, c).values.size(), 768u + c.trait_mask.size());
  }
}

TEST(ClassWeights, Formula) {
  auto w = class_weights(10, 90, ClassWeighting::kInverseFrequency);
  EXPECT_DOUBLE_EQ(w[0], 100.0 / 20.0);
  EXPECT_DOUBLE_EQ(w[1], 100.0 / 180.0);
  auto b = class_weights(50, 50, ClassWeighting::kInverseFrequency);
  EXPECT_EQ(b[0], 1.0);
  EXPECT_EQ(b[1], 1.0);
  auto n = class_weights(10, 90, ClassWeighting::kNone);
  EXPECT_EQ(n[0], 1.0);
  EXPECT_EQ(n[1], 1.0);
}

TEST(Config, JsonRoundTripAndValidation) {
  FusionConfig c = quick();
  c.weighting = ClassWeighting::kInverseFrequency;
  c.trait_mask = {Trait::kFear};
  FusionConfig back = FusionConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  FusionConfig bad;
  bad.hidden = {0};
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Detector, LearnsFromTraitColumnAndIsDeterministic) {
  FusionConfig c = quick();
  auto train = toy_set(200, 1, c), val = toy_set(60, 2, c), test = toy_set(100, 3, c);
  DetectorModel m = train_detector(train, val, c, "digest");
  auto p = predict(m, test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    correct += is_phish(p[i]) == (test.categories[i] == corpus::Category::kPhish);
  EXPECT_GE(static_cast<double>(correct) / p.size(), 0.95);

  DetectorModel again = train_detector(train, val, c, "digest");
  EXPECT_EQ(nn::dump_canonical(again.to_json()), nn::dump_canonical(m.to_json()));
  DetectorModel back = DetectorModel::from_json(m.to_json());
  EXPECT_EQ(predict(back, test.features), p);
}

TEST(Detector, UnitsSumToOneAndZeroModelIsHalf) {
  FusionConfig c = quick();
  c.train.max_epochs = 1;
  auto train = toy_set(20, 1, c);
  DetectorModel m = train_detector(train, train, c);
  for (const auto& f : train.features) {
    auto u = predict_units(m, f);
    EXPECT_NEAR(u[0] + u[1], 1.0, 1e-15);
  }
  m.network.zero_parameters();
  for (double p : predict(m, train.features)) EXPECT_EQ(p, 0.5);
  EXPECT_TRUE(is_phish(0.5));
  EXPECT_FALSE(is_phish(0.4999999));
}

TEST(Detector, RejectsBadInputs) {
  FusionConfig c = quick();
  auto train = toy_set(20, 1, c);
  auto single = train;
  for (auto& cat : single.categories) cat = corpus::Category::kPhish;
  EXPECT_THROW(train_detector(single, train, c), ValidationError);
  auto unknown = train;
  unknown.categories[0] = corpus::Category::kUnknown;
  EXPECT_THROW(train_detector(unknown, train, c), ValidationError);
  auto ragged = train;
  ragged.features[1].values.pop_back();
  EXPECT_THROW(train_detector(ragged, train, c), ValidationError);
  DetectorModel m = train_detector(train, train, [&] {
    auto q = c;
    q.train.max_epochs = 1;
    return q;
  }());
  EXPECT_THROW(predict(m, ragged.features), ValidationError);
}

TEST(Predictions, CsvFormat) {
  auto text = format_predictions({"a", "b"}, {0.5, 0.25});
  EXPECT_EQ(text, "email_id,probability,label\na,0.500000,PHISH\nb,0.250000,LEGIT\n");
}
