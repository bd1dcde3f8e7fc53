#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "dstt/checkpoint.hpp"
#include "dstt/cli.hpp"
#include "dstt/errors.hpp"
#include "dstt/fetch.hpp"
#include "dstt/synth.hpp"

using namespace dstt;
using namespace dstt::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result dstt_run(std::vector<std::string> args) {
  args.insert(args.begin(), "dstt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("dstt_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  std::size_t entries() const { return static_cast<std::size_t>(std::distance(fs::directory_iterator(path_), {})); }

private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

nlohmann::json echoed_config(const std::string& err) {
  const auto pos = err.find("config: ");
  if (pos == std::string::npos) return nullptr;
  const auto end = err.find('\n', pos);
  return nlohmann::json::parse(err.substr(pos + 8, end - pos - 8));
}

const std::vector<std::string> kSmallNet = {"--lstm-units", "8",  "--conv-filters", "4", "--dense-head-units", "8",
                                            "--n",          "256", "--lr",           "1e-3"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const std::string kSample = std::string(DSTT_SOURCE_DIR) + "/data/sample_omni2.dat";

}  // namespace

TEST(Cli, EverySubcommandHasHelp) {
  TempDir dir;
  for (const char* cmd : {"fetch", "ingest", "train", "predict", "evaluate", "ablate", "cv", "synth"}) {
    const auto r = dstt_run({cmd, "--help", "--out", dir / "x"});
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << cmd;
  }
  EXPECT_EQ(dstt_run({"--help"}).code, 0);
  EXPECT_EQ(dir.entries(), 0u);
}

TEST(Cli, UnknownSubcommandOrFlagPrintsUsage) {
  auto r = dstt_run({"transmogrify"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  r = dstt_run({"train", "--frobnicate", "3"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(dstt_run({}).code, 1);
}

TEST(Cli, ExitCodesFollowErrorKind) {
  TempDir dir;
  EXPECT_EQ(dstt_run({"train", "--out", dir / "m.json"}).code, 1);  // no --data
  EXPECT_EQ(dstt_run({"train", "--data", dir / "absent.csv", "--out", dir / "m.json"}).code, 2);
  EXPECT_EQ(dstt_run({"synth", "--count", "5", "--out", dir / "no/such/dir/s.csv"}).code, 2);
  EXPECT_EQ(dstt_run({"synth", "--count", "five", "--out", dir / "s.csv"}).code, 1);
  EXPECT_EQ(dstt_run({"ingest", "--data", kSample, "--w", "9", "--out", dir / "l.csv"}).code, 1);
}

TEST(Config, EmptyFileGivesDefaults) {
  const RunConfig c = apply_config_text(RunConfig{}, "");
  EXPECT_EQ(config_to_json(c), config_to_json(RunConfig{}));
  EXPECT_EQ(c.net.learning_rate, 1e-4);
  EXPECT_EQ(c.mc.samples, 100u);
  EXPECT_EQ(c.w, 1);
}

TEST(Config, FlagsOverrideFileOverridesDefaults) {
  TempDir dir;
  spit(dir / "c.json", R"({"learning_rate": 1e-3, "epochs": 7})");
  const auto r = dstt_run({"train", "--config", dir / "c.json", "--lr", "1e-4"});
  const auto cfg = echoed_config(r.err);
  ASSERT_FALSE(cfg.is_null()) << r.err;
  EXPECT_EQ(cfg["learning_rate"].get<double>(), 1e-4);
  EXPECT_EQ(cfg["epochs"].get<int>(), 7);
  EXPECT_EQ(cfg["lstm_units"].get<int>(), 250);
}

TEST(Config, UnknownKeyIsNamed) {
  EXPECT_THROW(
      {
        try {
          apply_config_text(RunConfig{}, R"({"learning_rte": 0.1})");
        } catch (const ConfigError& e) {
          EXPECT_NE(std::string(e.what()).find("learning_rte"), std::string::npos);
          throw;
        }
      },
      ConfigError);
  TempDir dir;
  spit(dir / "c.json", R"({"learning_rte": 0.1})");
  const auto r = dstt_run({"train", "--config", dir / "c.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("learning_rte"), std::string::npos);
}

TEST(Config, MalformedDocumentReportsLocation) {
  try {
    apply_config_text(RunConfig{}, "{\n  \"epochs\": 3,\n  oops\n}");
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(apply_config_text(RunConfig{}, R"({"epochs": "many"})"), ConfigError);
  EXPECT_THROW(apply_config_text(RunConfig{}, R"({"epochs": -3})"), ConfigError);
  EXPECT_THROW(apply_config_text(RunConfig{}, R"([1, 2])"), ConfigError);
}

TEST(Config, EveryKeyRoundTrips) {
  const auto doc = nlohmann::json::parse(config_to_json(RunConfig{}));
  EXPECT_EQ(doc.size(), config_keys().size());
  for (const auto& key : config_keys()) {
    nlohmann::json one = nlohmann::json::object();
    one[key] = doc[key];
    EXPECT_NO_THROW(apply_config_text(RunConfig{}, one.dump())) << key;
  }
}

TEST(ForecastCsv, RoundTripKeepsEveryDigit) {
  std::vector<ForecastRow> rows;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    ForecastRow r{data::HourStamp::from_civil(2021, 10, 1) + i, -30 + 20 * rng.normal(), 1.0 / 3.0 + i,
                  std::ldexp(rng.uniform(), -40), 0.1 + 0.2, 7e-300, -1e15 / 7.0, rng.normal()};
    rows.push_back(r);
  }
  std::stringstream ss;
  write_forecast_csv(ss, rows);
  const auto back = read_forecast_csv(ss);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].time, rows[i].time);
    EXPECT_EQ(back[i].observed, rows[i].observed);
    EXPECT_EQ(back[i].mean, rows[i].mean);
    EXPECT_EQ(back[i].aleatoric_var, rows[i].aleatoric_var);
    EXPECT_EQ(back[i].epistemic_var, rows[i].epistemic_var);
    EXPECT_EQ(back[i].total_var, rows[i].total_var);
    EXPECT_EQ(back[i].lower, rows[i].lower);
    EXPECT_EQ(back[i].upper, rows[i].upper);
  }
}

TEST(ForecastCsv, HeaderAndRowCounts) {
  std::stringstream empty;
  write_forecast_csv(empty, {});
  EXPECT_EQ(empty.str(), std::string(kForecastHeader) + "\n");
  std::vector<ForecastRow> rows(1104);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].time = data::HourStamp::from_civil(2021, 10, 1) + int(i);
  std::stringstream ss;
  write_forecast_csv(ss, rows);
  std::size_t lines = 0;
  for (std::string line; std::getline(ss, line);) ++lines;
  EXPECT_EQ(lines, 1105u);
  std::stringstream bad("timestamp,mean\n");
  EXPECT_THROW(read_forecast_csv(bad), ParseError);
}

TEST(Synth, SameSeedSameBytes) {
  TempDir dir;
  ASSERT_EQ(dstt_run({"synth", "--count", "500", "--seed", "4", "--out", dir / "a.csv"}).code, 0);
  ASSERT_EQ(dstt_run({"synth", "--count", "500", "--seed", "4", "--out", dir / "b.csv"}).code, 0);
  ASSERT_EQ(dstt_run({"synth", "--count", "500", "--seed", "5", "--out", dir / "c.csv"}).code, 0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_NE(slurp(dir / "a.csv"), slurp(dir / "c.csv"));
  const auto r = dstt_run({"synth", "--count", "3", "--out", "-"});
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 4);
}

TEST(Ingest, WritesLabeledTableAndReport) {
  TempDir dir;
  const auto r = dstt_run({"ingest", "--data", kSample, "--w", "3", "--out", dir / "l.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("2 segment(s)"), std::string::npos) << r.err;
  std::ifstream in(dir / "l.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("label"), std::string::npos);
}

TEST(Pipeline, TrainPredictEvaluate) {
  TempDir dir;
  auto r = dstt_run(cat({"train", "--data", kSample, "--w", "4", "--epochs", "5", "--seed", "7", "--out",
                         dir / "model.ckpt"},
                        kSmallNet));
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(dir / "model.ckpt"));
  std::ifstream log(dir / "model.ckpt.history.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, 6u);

  r = dstt_run({"predict", "--model", dir / "model.ckpt", "--data", kSample, "--K", "100", "--out", dir / "f.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream fin(dir / "f.csv");
  const auto rows = read_forecast_csv(fin);
  ASSERT_FALSE(rows.empty());
  for (const auto& row : rows) {
    EXPECT_EQ(row.total_var, row.aleatoric_var + row.epistemic_var);
    EXPECT_LE(row.lower, row.mean);
    EXPECT_GE(row.upper, row.mean);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i - 1].time, rows[i].time);

  r = dstt_run({"evaluate", "--pred", dir / "f.csv", "--w", "4", "--out", dir / "report.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rmse="), std::string::npos);
  EXPECT_NE(slurp(dir / "report.csv").find("DSTT,FULL,4,"), std::string::npos);
}

TEST(Pipeline, EvaluatePerfectForecast) {
  TempDir dir;
  std::vector<ForecastRow> rows;
  for (int i = 0; i < 10; ++i) {
    const double y = -10.0 * i;
    rows.push_back({data::HourStamp::from_civil(2020, 1, 1) + i, y, y, 1, 0, 1, y - 2, y + 2});
  }
  {
    std::ofstream f(dir / "p.csv");
    write_forecast_csv(f, rows);
  }
  const auto r = dstt_run({"evaluate", "--pred", dir / "p.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rmse=0 "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("r2=1\n"), std::string::npos) << r.out;
}

TEST(Pipeline, EmptyForecastIsHeaderOnly) {
  TempDir dir;
  ASSERT_EQ(dstt_run(cat({"train", "--data", kSample, "--epochs", "1", "--out", dir / "m.json"}, kSmallNet)).code, 0);
  const auto r = dstt_run({"predict", "--model", dir / "m.json", "--data", kSample, "--boundary", "2030-01-01",
                           "--K", "2", "--out", dir / "f.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_EQ(slurp(dir / "f.csv"), std::string(kForecastHeader) + "\n");
}

TEST(Checkpoint, RoundTripIsBitwise) {
  TempDir dir;
  ASSERT_EQ(dstt_run(cat({"train", "--data", kSample, "--epochs", "2", "--seed", "3", "--out", dir / "m.json"},
                         kSmallNet))
                .code,
            0);
  const model::DsttModel a = model::load_checkpoint(dir / "m.json");
  model::save_checkpoint(a, dir / "m2.json");
  EXPECT_EQ(slurp(dir / "m.json"), slurp(dir / "m2.json"));
  const model::DsttModel b = model::load_checkpoint(dir / "m2.json");
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->id, pb[i]->id);
    ASSERT_EQ(pa[i]->value.numel(), pb[i]->value.numel());
    for (std::size_t j = 0; j < pa[i]->value.numel(); ++j)
      EXPECT_EQ(pa[i]->value.values()[j], pb[i]->value.values()[j]);
  }
  EXPECT_EQ(a.target_mean, b.target_mean);
  EXPECT_EQ(a.target_scale, b.target_scale);
  EXPECT_EQ(a.history.size(), b.history.size());
  EXPECT_THROW(model::checkpoint_from_string("{\"format\": \"other\"}"), ParseError);
}

TEST(Pipeline, RerunsAreByteIdentical) {
  TempDir dir;
  for (const char* tag : {"a", "b"}) {
    const std::string t = tag;
    ASSERT_EQ(dstt_run(cat({"train", "--data", kSample, "--epochs", "2", "--seed", "5", "--out", dir / (t + ".m")},
                           kSmallNet))
                  .code,
              0);
    ASSERT_EQ(dstt_run({"predict", "--model", dir / (t + ".m"), "--data", kSample, "--K", "5", "--seed", "5",
                        "--out", dir / (t + ".f")})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(dir / "a.m"), slurp(dir / "b.m"));
  EXPECT_EQ(slurp(dir / "a.f"), slurp(dir / "b.f"));
}

TEST(Fetch, DownloadsOnceThenUsesCache) {
  httplib::Server server;
  std::atomic<int> requests{0};
  server.Get(R"(/omni/omni2_(\d{4})\.dat)", [&](const httplib::Request& req, httplib::Response& res) {
    ++requests;
    const int year = std::stoi(req.matches[1]);
    data::SynthOptions opt;
    opt.seed = static_cast<std::uint64_t>(year);
    opt.start = data::HourStamp::from_civil(year, 1, 1);
    std::ostringstream body;
    for (const auto& r : data::synthesize_records(24 * 3, opt)) data::write_omni_row(body, r);
    // last hours of the year
    opt.start = data::HourStamp::from_civil(year, 12, 31);
    for (const auto& r : data::synthesize_records(24, opt)) data::write_omni_row(body, r);
    res.set_content(body.str(), "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  TempDir dir;
  const std::string url = "http://127.0.0.1:" + std::to_string(port) + "/omni/omni2_{year}.dat";
  const std::vector<std::string> args = {"fetch", "--start", "2015-12-31T20", "--end", "2016-01-01T04", "--url", url,
                                         "--cache-dir", dir / "cache"};
  auto r = dstt_run(args);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(requests.load(), 2);
  EXPECT_NE(r.err.find("2 download(s), 0 cached"), std::string::npos) << r.err;
  std::string path = r.out.substr(0, r.out.find('\n'));
  std::size_t rows = 0;
  {
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) ++rows;
  }
  EXPECT_EQ(rows, 8u);

  r = dstt_run(args);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(requests.load(), 2);
  EXPECT_NE(r.err.find("0 download(s), 2 cached"), std::string::npos) << r.err;

  // tamper with one cached year: the checksum sidecar no longer matches
  for (const auto& e : fs::directory_iterator(dir / "cache")) {
    if (e.path().filename() == "omni2_2015.dat") spit(e.path().string(), "garbage\n");
  }
  r = dstt_run(args);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("omni2_2015"), std::string::npos) << r.err;

  server.stop();
  worker.join();
  r = dstt_run({"fetch", "--start", "2017-01-01", "--end", "2017-01-02", "--url", url, "--cache-dir", dir / "c2"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(dstt_run({"fetch", "--start", "2017-01-02", "--end", "2017-01-01", "--url", url}).code, 1);
}
