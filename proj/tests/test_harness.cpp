#include <snlab/snlab.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace snlab;

namespace {

std::vector<double> entries(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("snlab_" + name)).string();
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

/// Four 28x28 images with labels 3, 1, 4, 1 and a label file to match.
struct IdxFixture {
  std::string images = temp_path("images.idx");
  std::string labels = temp_path("labels.idx");
  std::vector<unsigned char> img, lab;

  IdxFixture() {
    put_u32(img, kIdxImageMagic);
    put_u32(img, 4);
    put_u32(img, 28);
    put_u32(img, 28);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t p = 0; p < 784; ++p) img.push_back(static_cast<unsigned char>((p * (k + 3)) % 256));
    put_u32(lab, kIdxLabelMagic);
    put_u32(lab, 4);
    for (unsigned char c : {3, 1, 4, 1}) lab.push_back(c);
    write_bytes(images, img);
    write_bytes(labels, lab);
  }
  ~IdxFixture() {
    std::filesystem::remove(images);
    std::filesystem::remove(labels);
  }
};

ExperimentConfig tiny_sphere_config() {
  ExperimentConfig c;
  c.d0 = 4;
  c.d1 = 16;
  c.n = 8;
  c.activation = "softplus-shifted";
  c.max_iters = 40;
  c.ratios = {1.0};
  c.seeds_per_point = 1;
  c.workers = 1;
  return c;
}

}  // namespace

TEST(SphereData, UnitColumnsAndDeterminism) {
  const auto a = sample_unit_sphere_data(20, 7, RngStream(5));
  for (double c : column_norms(a)) EXPECT_NEAR(c, 1.0, 1e-12);
  const auto b = sample_unit_sphere_data(20, 7, RngStream(5));
  EXPECT_EQ(entries(a), entries(b));
}

TEST(SphereData, ColumnMeanMatchesUniformSphereStatistics) {
  // For independent uniform unit vectors E||mean||^2 = 1/n exactly.
  const std::size_t n = 50, d0 = 10, seeds = 100;
  double avg = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto x = sample_unit_sphere_data(n, d0, RngStream(s));
    std::vector<double> m(d0, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < d0; ++i) m[i] += x(i, j) / static_cast<double>(n);
    double sq = 0.0;
    for (double v : m) sq += v * v;
    EXPECT_LE(std::sqrt(sq), 3.0 / std::sqrt(static_cast<double>(n))) << s;
    avg += sq / static_cast<double>(seeds);
  }
  EXPECT_NEAR(avg * static_cast<double>(n), 1.0, 0.15);
}

TEST(InitWeights, ShapesAndZeroScale) {
  const Dims dims{3, 5, 2, 4};
  const auto t = init_weights(dims, {0.0, 0.7, 1.0}, RngStream(1));
  EXPECT_EQ(t.W.rows(), 5U);
  EXPECT_EQ(t.W.cols(), 3U);
  EXPECT_EQ(t.V.rows(), 2U);
  EXPECT_EQ(t.V.cols(), 5U);
  EXPECT_EQ(max_abs(t.W), 0.0);
  EXPECT_GT(max_abs(t.V), 0.0);
  EXPECT_THROW(init_weights(dims, {-1.0, 1.0, 1.0}, RngStream(1)), ArgumentError);
}

TEST(InitWeights, EmpiricalStandardDeviation) {
  const double omega1 = 0.3;
  const auto t = init_weights({20, 1000, 1, 1}, {omega1, 1.0, 1.0}, RngStream(9));
  double ss = 0.0;
  for (double v : t.W.data()) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(t.W.data().size()));
  EXPECT_NEAR(sd / omega1, 1.0, 0.02);
}

TEST(InitWeights, BudgetViolationIsReportedNotFatal) {
  const InitScheme s{1.0, 1.0, 0.1};
  EXPECT_FALSE(s.within_budget());
  EXPECT_NO_THROW(init_weights({2, 3, 1, 1}, s, RngStream(0)));
}

TEST(SgdTrain, FullBatchMatchesGradientDescent) {
  const Dims dims{5, 12, 2, 9};
  const auto x = sample_unit_sphere_data(dims.n, dims.d0, RngStream(1));
  Matrix y = gaussian_matrix(dims.d2, dims.n, 1.0, RngStream(2));
  y *= 1.0 / frobenius_norm(y);
  const Dataset data = make_dataset(x, y);
  const auto theta0 = init_weights(dims, {1.0, 0.3, 1.0}, RngStream(3));
  const auto& phi = activation("gelu");
  const auto gd = gd_train(theta0, data, phi, 0.02, 15, 0.0, true);
  const auto sgd = sgd_train(theta0, data, phi, 0.02, dims.n, 15, RngStream(4), 0.0, true);
  ASSERT_EQ(gd.losses.size(), sgd.losses.size());
  for (std::size_t i = 0; i < gd.losses.size(); ++i) {
    EXPECT_DOUBLE_EQ(gd.losses[i], sgd.losses[i]) << i;
    EXPECT_DOUBLE_EQ((*gd.lazy_deviation)[i], (*sgd.lazy_deviation)[i]) << i;
  }
  EXPECT_EQ(entries(gd.final_params.W), entries(sgd.final_params.W));
}

TEST(SgdTrain, MinibatchIsDeterministicAndDescends) {
  const Dims dims{5, 20, 1, 16};
  const Dataset data = make_dataset(sample_unit_sphere_data(dims.n, dims.d0, RngStream(1)),
                                    Matrix(1, dims.n, 0.1));
  const auto theta0 = init_weights(dims, {1.0, 0.2, 1.0}, RngStream(3));
  const auto& phi = activation("tanh");
  const auto a = sgd_train(theta0, data, phi, 0.005, 4, 30, RngStream(8), 0.0, true);
  const auto b = sgd_train(theta0, data, phi, 0.005, 4, 30, RngStream(8), 0.0, true);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(*a.lazy_deviation, *b.lazy_deviation);
  EXPECT_EQ(a.losses.size(), 31U);
  EXPECT_LT(a.losses.back(), a.losses.front());
  EXPECT_THROW(sgd_train(theta0, data, phi, 0.005, 17, 1, RngStream(8)), ArgumentError);
}

TEST(SgdTrain, DivergenceReportsEpoch) {
  const Dataset data{Matrix{{1.0}}, Matrix{{0.0}}};
  const NetParams theta{Matrix{{1.0}}, Matrix{{1.0}}};
  try {
    sgd_train(theta, data, activation("cube"), 10.0, 1, 50, RngStream(0));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.iteration, 1U);
  }
}

TEST(LoadIdx, FixtureShapesAndUnitColumns) {
  IdxFixture f;
  const auto d = load_idx(f.images, f.labels);
  EXPECT_EQ(d.data.X.rows(), 784U);
  EXPECT_EQ(d.data.X.cols(), 4U);
  EXPECT_EQ(d.data.Y.rows(), 10U);
  EXPECT_EQ(d.labels, (std::vector<std::uint8_t>{3, 1, 4, 1}));
  for (double c : column_norms(d.data.X)) EXPECT_NEAR(c, 1.0, 1e-12);
  EXPECT_NEAR(frobenius_norm(d.data.Y), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(d.data.Y(3, 0), 0.5);
  EXPECT_EQ(load_idx(f.images, f.labels, 2).data.X.cols(), 2U);
}

TEST(LoadIdx, WrongMagicNamesObservedValue) {
  IdxFixture f;
  auto bad = f.img;
  bad[2] = 0;
  bad[3] = 0;
  write_bytes(f.images, bad);
  try {
    load_idx(f.images, f.labels);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000000"), std::string::npos) << e.what();
  }
}

TEST(LoadIdx, TruncatedPayloadIsLengthError) {
  IdxFixture f;
  auto cut = f.img;
  cut.resize(cut.size() - 100);
  write_bytes(f.images, cut);
  EXPECT_THROW(load_idx(f.images, f.labels), LengthError);
  cut.resize(10);
  write_bytes(f.images, cut);
  EXPECT_THROW(load_idx(f.images, f.labels), LengthError);
}

TEST(LoadIdx, MissingFileIsIoError) {
  EXPECT_THROW(load_idx(temp_path("absent.idx"), temp_path("absent2.idx")), IoError);
}

TEST(SyntheticDigits, LabelsAndNormalization) {
  const auto d = synthetic_digits(40, RngStream(2));
  EXPECT_EQ(d.data.X.rows(), kDigitSide * kDigitSide);
  for (double c : column_norms(d.data.X)) EXPECT_NEAR(c, 1.0, 1e-12);
  for (auto l : d.labels) EXPECT_LT(l, kDigitClasses);
  EXPECT_EQ(entries(synthetic_digits(40, RngStream(2)).data.X), entries(d.data.X));
}

TEST(Config, ParsesSectionsAndRatioBudget) {
  const auto c = parse_config_text(R"({
    "seed": 7, "activation": "tanh",
    "dims": {"d0": 10, "d1": 100, "d2": 1, "n": 30},
    "init": {"ratio": 100.0, "product_budget": "auto"},
    "optimizer": {"method": "sgd", "eta": "auto", "batch_size": 16, "epochs": 3},
    "sweep": {"ratios": [0.1, 10], "seeds_per_point": 2},
    "constants": {"C_init": 0.5, "probes": {"delta3": 5.0}},
    "output": {"format": "csv"}
  })");
  EXPECT_EQ(c.seed, 7U);
  EXPECT_EQ(c.activation, "tanh");
  EXPECT_EQ(*c.d1, 100U);
  EXPECT_FALSE(c.eta.has_value());
  EXPECT_EQ(c.probes.delta3, 5.0);
  EXPECT_EQ(c.format, ReportFormat::Csv);
  const auto s = c.scheme(100);
  const double budget = 1.0 / std::sqrt(1000.0);
  EXPECT_NEAR(s.omega1 * s.omega2, budget, 1e-15);
  EXPECT_NEAR(s.omega2 / s.omega1, 100.0, 1e-12);
  for (double r : c.ratios) {
    const auto p = c.scheme_for(r, 100);
    EXPECT_NEAR(p.omega1 * p.omega2, budget, 1e-15);
    EXPECT_TRUE(p.within_budget());
  }
}

TEST(Config, OmegaOneAloneTakesTheBudget) {
  const auto c = parse_config_text(R"({"dims": {"d1": "auto"}, "init": {"omega1": 1.0}})");
  EXPECT_FALSE(c.d1.has_value());
  const auto s = c.scheme(4096);
  EXPECT_EQ(s.omega1, 1.0);
  EXPECT_NEAR(s.omega2, 1.0 / std::sqrt(10.0 * 4096.0), 1e-15);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(parse_config_text(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"dims": {"d0": 3, "width": 4}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"dims": {"d0": "ten"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"dims": {"d0": -3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"activation": "relu"})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"optimizer": {"method": "adam"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"sweep": {"ratios": []}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"init": {"omega2": 1.0}})"), ConfigError);
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
  try {
    parse_config_text(R"({"optimizer": {"epochs": 3, "lr": 0.1}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("config.optimizer.lr"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_config(temp_path("absent.json")), IoError);
}

TEST(Report, EmptyTraceIsHeaderOnly) {
  EXPECT_EQ(trace_csv(trace_columns(TrainingTrace{})), std::string(kTraceCsvHeader) + "\n");
}

TEST(Report, CsvColumnsAndMissingCells) {
  TrainingTrace t;
  t.losses = {1.0, 0.5};
  t.grad_norms = {2.0, 1.0};
  t.dist_from_init = {0.0, 0.25};
  EXPECT_EQ(trace_csv(trace_columns(t)), std::string(kTraceCsvHeader) + "\n0,1,2,0,\n1,0.5,1,0.25,\n");
  t.lazy_deviation = std::vector<double>{0.0, 0.1};
  EXPECT_EQ(trace_csv(trace_columns(t)).substr(std::string(kTraceCsvHeader).size() + 1),
            "0,1,2,0,0\n1,0.5,1,0.25,0.10000000000000001\n");
}

TEST(Report, TrainingRunIsByteStableAndRoundTrips) {
  auto cfg = tiny_sphere_config();
  const auto a = dump(to_json(run_training(cfg), cfg));
  const auto b = dump(to_json(run_training(cfg), cfg));
  EXPECT_EQ(a, b);
  const auto j = ojson::parse(a);
  EXPECT_EQ(dump(j), a);
  for (const char* k : {"mu", "nu", "beta", "rho", "eta"}) EXPECT_TRUE(j["constants"].contains(k)) << k;
  for (const char* k : {"init_margin", "width", "psi"}) EXPECT_TRUE(j["certificates"].contains(k)) << k;
  EXPECT_EQ(j["label_scaling"], kLabelScalingNote);
}

TEST(Report, EmitWritesFileAndReportsPath) {
  const auto path = temp_path("report.txt");
  emit_report("abc\n", path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "abc");
  std::filesystem::remove(path);
  try {
    emit_report("x", "/nonexistent-dir/out.json");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/out.json"), std::string::npos);
  }
}

TEST(RunTraining, RelativeStopAndCertificates) {
  auto cfg = tiny_sphere_config();
  cfg.d1 = 64;
  cfg.max_iters = 5000;
  cfg.stop_loss_relative = 1e-3;
  const auto r = run_training(cfg);
  EXPECT_GT(r.certs.constants.mu_phi, 0.0);
  EXPECT_TRUE(r.certs.init.has_value());
  EXPECT_DOUBLE_EQ(r.eta, r.certs.eta);
  EXPECT_DOUBLE_EQ(r.stop_loss, 1e-3 * r.certs.h0);
  const std::size_t steps = r.trace.losses.size() - 1;
  EXPECT_TRUE(r.trace.losses.back() <= r.stop_loss || steps == cfg.max_iters);
  for (std::size_t i = 0; i < steps; ++i) EXPECT_GT(r.trace.losses[i], r.stop_loss) << i;
  ASSERT_TRUE(r.rate.has_value());
  EXPECT_TRUE(r.rate->monotone);
  ASSERT_TRUE(r.scheme_certs.width.has_value());
  EXPECT_EQ(r.scheme_certs.width->d1_actual, 64U);
  EXPECT_TRUE(r.scheme_certs.psi.has_value());
}

TEST(RunTraining, NarrowNetworkHasNoInitCertificate) {
  auto cfg = tiny_sphere_config();
  cfg.d1 = 4;
  const auto r = run_training(cfg);
  EXPECT_EQ(r.certs.constants.mu_phi, 0.0);
  EXPECT_FALSE(r.certs.init.has_value());
  EXPECT_FALSE(r.confinement.has_value());
}

TEST(Sweep, OneRatioOneSeedGivesOneRecord) {
  const auto rep = lazy_sweep(tiny_sphere_config());
  ASSERT_EQ(rep.records.size(), 1U);
  ASSERT_EQ(rep.aggregates.size(), 1U);
  EXPECT_EQ(rep.records[0].ratio, 1.0);
  EXPECT_EQ(rep.records[0].seed, 0U);
  EXPECT_EQ(rep.aggregates[0].median_lazy_deviation, rep.records[0].lazy_deviation_final);
}

TEST(Sweep, EveryPairOnceAtFixedBudgetIndependentOfWorkers) {
  auto cfg = tiny_sphere_config();
  cfg.ratios = {0.01, 1.0, 100.0};
  cfg.seeds_per_point = 3;
  const auto one = lazy_sweep(cfg);
  cfg.workers = 3;
  const auto three = lazy_sweep(cfg);
  ASSERT_EQ(one.records.size(), 9U);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(one.records[i].ratio, cfg.ratios[i / 3]);
    EXPECT_EQ(one.records[i].seed, i % 3);
    EXPECT_NEAR(one.records[i].omega1 * one.records[i].omega2, one.product_budget, 1e-15);
  }
  EXPECT_EQ(dump(to_json(one, cfg, "lazy-sweep")), dump(to_json(three, cfg, "lazy-sweep")));
  EXPECT_EQ(sweep_csv(one), sweep_csv(three));
  ASSERT_TRUE(one.ratio_certificates[0].lazy.has_value());
  EXPECT_EQ(one.ratio_certificates[0].lazy->regime, LazyRegime::LazyAsymptotic);
  EXPECT_EQ(one.ratio_certificates[2].lazy->regime, LazyRegime::NonLazyPossible);
}

TEST(Sweep, AggregateMedianAndBand) {
  auto cfg = tiny_sphere_config();
  cfg.seeds_per_point = 4;
  const auto rep = lazy_sweep(cfg);
  std::vector<double> v;
  for (const auto& r : rep.records) v.push_back(r.lazy_deviation_final);
  std::sort(v.begin(), v.end());
  EXPECT_DOUBLE_EQ(rep.aggregates[0].median_lazy_deviation, 0.5 * (v[1] + v[2]));
  const double mean = (v[0] + v[1] + v[2] + v[3]) / 4.0;
  EXPECT_NEAR(0.5 * (rep.aggregates[0].lazy_band_lower + rep.aggregates[0].lazy_band_upper), mean,
              1e-15);
}

TEST(Teacher, RelabelledDataMatchTeacherPredictions) {
  ExperimentConfig cfg;
  cfg.data_source = "digits";
  cfg.n = 60;
  cfg.n_test = 20;
  cfg.d1 = 32;
  cfg.teacher_eta = 0.005;
  cfg.teacher_accuracy = 0.9;
  const auto& phi = activation(cfg.activation);
  const auto p = make_problem(cfg, RngStream(1));
  ASSERT_TRUE(p.test.has_value());
  EXPECT_EQ(p.test->X.cols(), 20U);
  const auto t = train_teacher(cfg, p, phi, RngStream(2));
  EXPECT_GE(t.train_accuracy, 0.9);
  const auto q = relabel(p, t.params, phi);
  EXPECT_EQ(accuracy(predict_classes(t.params, q.train.X, phi), q.train_labels), 1.0);
  EXPECT_NEAR(frobenius_norm(q.train.Y), 1.0, 1e-12);
  EXPECT_NEAR(frobenius_norm(q.test->Y), 1.0, 1e-12);
}

TEST(Teacher, MissedTargetAborts) {
  ExperimentConfig cfg;
  cfg.data_source = "digits";
  cfg.n = 40;
  cfg.d1 = 8;
  cfg.teacher_epochs = 5;
  cfg.teacher_accuracy = 1.01;
  const auto& phi = activation(cfg.activation);
  const auto p = make_problem(cfg, RngStream(1));
  EXPECT_THROW(train_teacher(cfg, p, phi, RngStream(2)), TeacherError);
  cfg.data_source = "sphere";
  EXPECT_THROW(train_teacher(cfg, make_problem(cfg, RngStream(1)), phi, RngStream(2)), ConfigError);
}
