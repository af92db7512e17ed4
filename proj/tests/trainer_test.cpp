#include <algorithm>
#include <set>

#include "tpwng/errors.hpp"
#include "tpwng/metrics.hpp"
#include "tpwng/synthetic.hpp"
#include "tpwng/trainer.hpp"
#include "test_util.hpp"

namespace tpwng {
namespace {

struct TinyData {
  testing::TempDir dir;
  data::DatasetManifest manifest;
  std::vector<FeatureSequence> train, test;

  explicit TinyData(std::uint64_t seed = 7) {
    data::SyntheticConfig s;
    s.num_classes = 3;
    s.dim = 16;
    s.frames = 12;
    s.train_videos = 8;
    s.test_videos = 6;
    s.seed = seed;
    manifest = data::generate_synthetic(s, dir.path()).manifest;
    train = data::load_split(manifest, "train");
    test = data::load_split(manifest, "test");
  }
};

TrainConfig tiny_config() {
  TrainConfig cfg = preset_config("synthetic").train;
  cfg.tcsal.layers = 1;
  cfg.tcsal.heads = 2;
  cfg.context_length = 2;
  cfg.batch_normal = 2;
  cfg.batch_abnormal = 2;
  cfg.epochs = 2;
  return cfg;
}

void split(const std::vector<FeatureSequence>& v, std::vector<const FeatureSequence*>& n,
           std::vector<const FeatureSequence*>& a) {
  for (const auto& s : v) (s.label ? a : n).push_back(&s);
}

TEST(Sampler, FullPoolsGiveWholeSet) {
  BatchSampler s(32, 32, 32, 32, 1);
  for (int i = 0; i < 3; ++i) {
    Batch b = s.next();
    std::set<std::size_t> n(b.normal.begin(), b.normal.end()), a(b.abnormal.begin(), b.abnormal.end());
    EXPECT_EQ(n.size(), 32u);
    EXPECT_EQ(a.size(), 32u);
  }
  EXPECT_EQ(s.steps_per_epoch(), 1);
}

TEST(Sampler, Deterministic) {
  BatchSampler a(10, 7, 3, 3, 42), b(10, 7, 3, 3, 42), c(10, 7, 3, 3, 43);
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    Batch x = a.next(), y = b.next(), z = c.next();
    EXPECT_EQ(x.normal, y.normal);
    EXPECT_EQ(x.abnormal, y.abnormal);
    differs = differs || x.normal != z.normal || x.abnormal != z.abnormal;
  }
  EXPECT_TRUE(differs);
}

TEST(Sampler, EpochCoversEveryVideo) {
  BatchSampler s(20, 13, 4, 4, 3);
  EXPECT_EQ(s.steps_per_epoch(), 5);
  std::set<std::size_t> n, a;
  for (int i = 0; i < s.steps_per_epoch(); ++i) {
    Batch b = s.next();
    ASSERT_EQ(b.normal.size(), 4u);
    ASSERT_EQ(b.abnormal.size(), 4u);
    n.insert(b.normal.begin(), b.normal.end());
    a.insert(b.abnormal.begin(), b.abnormal.end());
  }
  EXPECT_EQ(n.size(), 20u);
  EXPECT_EQ(a.size(), 13u);
}

TEST(Sampler, Errors) {
  EXPECT_THROW(BatchSampler(0, 3, 1, 1, 1), ContractError);
  EXPECT_THROW(BatchSampler(3, 3, 0, 1, 1), ContractError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ad::Parameter p("p", ad::Matrix::Constant(1, 2, 1.0));
  Adam opt({&p}, {0.1, 0.0});
  ad::Tape tape;
  tape.backward(ad::sum(ad::scale(tape.param(p), -3.0)));
  opt.step();
  EXPECT_NEAR(p.value()(0, 0), 1.1, 1e-9);
  EXPECT_EQ(opt.steps(), 1);
  opt.zero_grad();
  EXPECT_EQ(p.grad().squaredNorm(), 0.0);
}

TEST(Adam, DecoupledWeightDecay) {
  ad::Parameter p("p", ad::Matrix::Constant(1, 1, 2.0));
  Adam opt({&p}, {0.1, 0.5});
  opt.zero_grad();
  opt.step();
  EXPECT_NEAR(p.value()(0, 0), 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}

TEST(Trainer, ZeroLearningRateLeavesParameters) {
  TinyData d;
  TrainConfig cfg = tiny_config();
  cfg.learning_rate = 0.0;
  Model m = make_model(d.manifest, cfg);
  const auto before = m.checksum();
  std::vector<const FeatureSequence*> n, a;
  split(d.train, n, a);
  Adam opt(m.parameters(), {0.0, cfg.weight_decay});
  const auto r = train_step(m, cfg, n, a, opt);
  EXPECT_GT(r.total, 0.0);
  EXPECT_EQ(m.checksum(), before);
}

TEST(Trainer, ReportMatchesWeightedSum) {
  TinyData d;
  TrainConfig cfg = tiny_config();
  Model m = make_model(d.manifest, cfg);
  std::vector<const FeatureSequence*> n, a;
  split(d.train, n, a);
  const auto r = batch_losses(m, cfg, n, a);
  EXPECT_NEAR(r.total, loss::total_loss(r, cfg.weights, cfg.toggles), 1e-12);
  EXPECT_GE(r.rank_normal, 0.0);
  EXPECT_GE(r.rank_abnormal, 0.0);
  EXPECT_GE(r.sp, 0.0);
  EXPECT_GE(r.sm, 0.0);
}

TEST(Trainer, OverfitsFixedMicroBatch) {
  std::vector<double> ratios;
  for (std::uint64_t seed : {1, 2, 3}) {
    TinyData d(seed);
    TrainConfig cfg = tiny_config();
    cfg.seed = seed;
    Model m = make_model(d.manifest, cfg);
    std::vector<const FeatureSequence*> n, a;
    split(d.train, n, a);
    Adam opt(m.parameters(), {cfg.learning_rate, cfg.weight_decay});
    const double first = batch_losses(m, cfg, n, a).total;
    for (int i = 0; i < 50; ++i) train_step(m, cfg, n, a, opt);
    ratios.push_back(batch_losses(m, cfg, n, a).total / first);
  }
  std::sort(ratios.begin(), ratios.end());
  EXPECT_LT(ratios[1], 0.9);
}

TEST(Trainer, IdenticalRunsGiveIdenticalStreams) {
  TinyData d;
  TrainConfig cfg = tiny_config();
  auto run = [&] {
    Model m = make_model(d.manifest, cfg);
    auto logs = train(m, cfg, d.train);
    return std::make_pair(logs, m.checksum());
  };
  const auto [la, ca] = run();
  const auto [lb, cb] = run();
  ASSERT_EQ(la.size(), lb.size());
  ASSERT_EQ(la.size(), 2u * 2u);
  for (std::size_t i = 0; i < la.size(); ++i) {
    EXPECT_EQ(la[i].epoch, lb[i].epoch);
    EXPECT_EQ(la[i].step, lb[i].step);
    EXPECT_EQ(la[i].losses.total, lb[i].losses.total);
    EXPECT_EQ(la[i].losses.cl, lb[i].losses.cl);
  }
  EXPECT_EQ(ca, cb);
}

TEST(Trainer, CallbackSeesEveryStep) {
  TinyData d;
  TrainConfig cfg = tiny_config();
  Model m = make_model(d.manifest, cfg);
  int calls = 0;
  const auto logs = train(m, cfg, d.train, [&](const StepLog&) { ++calls; });
  EXPECT_EQ(calls, static_cast<int>(logs.size()));
}

TEST(Evaluate, UsesOnlyScoringPath) {
  TinyData d;
  TrainConfig cfg = tiny_config();
  Model m = make_model(d.manifest, cfg);
  for (auto* p : m.parameters()) p->reset_reads();
  const EvalResult r = evaluate(m, d.test);
  for (auto* p : m.text_parameters()) EXPECT_EQ(p->reads(), 0u) << p->name();
  std::size_t scoring_reads = 0;
  for (auto* p : m.scoring_parameters()) scoring_reads += p->reads();
  EXPECT_GT(scoring_reads, 0u);
  EXPECT_EQ(r.num_frames, d.test.size() * 12u);
  ASSERT_EQ(r.curves.size(), d.test.size());
  ASSERT_TRUE(r.auc.has_value());
  EXPECT_GE(*r.auc, 0.0);
  EXPECT_LE(*r.auc, 1.0);
  for (const auto& c : r.curves) EXPECT_TRUE((c.scores.array() > 0.0).all() && (c.scores.array() < 1.0).all());
}

TEST(Evaluate, MatchesScoreVideosAndMetrics) {
  TinyData d;
  TrainConfig cfg = tiny_config();
  Model m = make_model(d.manifest, cfg);
  const auto scores = score_videos(m, d.test);
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    s.insert(s.end(), scores[i].data(), scores[i].data() + scores[i].size());
    y.insert(y.end(), d.test[i].frame_truth->begin(), d.test[i].frame_truth->end());
  }
  const EvalResult r = evaluate(m, d.test);
  EXPECT_EQ(r.auc, metrics::frame_auc(s, y));
  EXPECT_EQ(r.ap, metrics::frame_ap(s, y));
}

TEST(Evaluate, RequiresTruth) {
  TinyData d;
  Model m = make_model(d.manifest, tiny_config());
  EXPECT_THROW(evaluate(m, d.train), ContractError);
}

TEST(PseudoLabels, ShapesAndNormalZeros) {
  TinyData d;
  TrainConfig cfg = tiny_config();
  Model m = make_model(d.manifest, cfg);
  const auto pl = infer_pseudo_labels(m, cfg, d.train);
  ASSERT_EQ(pl.size(), d.train.size());
  for (std::size_t i = 0; i < pl.size(); ++i) {
    EXPECT_EQ(pl[i].gamma.size(), 12u);
    if (d.train[i].label == 0) {
      EXPECT_EQ(pl[i].gamma, std::vector<std::uint8_t>(12, 0));
      EXPECT_FALSE(pl[i].psi_norm.has_value());
    } else {
      EXPECT_TRUE(pl[i].psi_norm.has_value());
    }
  }
  std::vector<FeatureSequence> only_abnormal;
  for (const auto& v : d.train)
    if (v.label) only_abnormal.push_back(v);
  EXPECT_THROW(infer_pseudo_labels(m, cfg, only_abnormal), ContractError);
  cfg.nvp = prompt::NvpMode::Off;
  EXPECT_EQ(infer_pseudo_labels(m, cfg, only_abnormal).size(), only_abnormal.size());
}

}  // namespace
}  // namespace tpwng
