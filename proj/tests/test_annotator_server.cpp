#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <thread>

#include "pulse/annotator_server.hpp"
#include "pulse/synth.hpp"

using namespace pulse;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto p = fs::temp_directory_path() /
                 ("pulse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_signal(const fs::path& dir, const std::string& name, double duration = 30.0) {
  SynthConfig c;
  c.mean_hr_bpm = 60;
  c.duration_s = duration;
  const auto beats = synth_ibis(c).beats;
  const auto path = dir / (name + ".txt");
  write_file_atomic(path, serialize_gt_waveform(synth_ppg(beats, duration)));
  return path;
}

AnnotatorService::Options options(const fs::path& store) {
  AnnotatorService::Options o;
  o.store = store;
  o.annotator = "tester";
  o.created_at = "2026-01-01T00:00:00Z";
  return o;
}

class Running {
 public:
  explicit Running(AnnotatorService& svc) {
    bind_routes(server_, svc);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

nlohmann::json body_of(const httplib::Result& r) {
  EXPECT_TRUE(r);
  return nlohmann::json::parse(r->body);
}

std::string edit_body(const std::string& kind, double t, double t2, std::optional<std::uint64_t> v) {
  nlohmann::json j;
  j["edit"] = {{"kind", kind}, {"t", t}, {"t2", t2}};
  if (v) j["expected_version"] = *v;
  return j.dump();
}

}  // namespace

TEST(AnnotatorServer, DeleteThenExport) {
  const auto dir = fresh_dir("flow");
  AnnotatorService svc(options(dir / "store"));
  svc.open_signal(write_signal(dir, "rec1"));
  Running run(svc);
  auto cli = run.client();

  const auto peaks = body_of(cli.Get("/api/session/rec1/peaks"));
  const auto list = peaks["peaks"].get<std::vector<double>>();
  ASSERT_NEAR(static_cast<double>(list.size()), 30.0, 1.0);
  const double victim = list[10];

  const auto r = cli.Post("/api/session/rec1/edit", edit_body("delete", victim + 0.05, 0, 0), "application/json");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["version"], 1);

  const auto ex = cli.Post("/api/session/rec1/export", "{}", "application/json");
  ASSERT_EQ(ex->status, 200);
  const auto file = parse_annotations(ex->body);
  EXPECT_EQ(file.peaks.size(), list.size() - 1);
  EXPECT_EQ(std::find(file.peaks.begin(), file.peaks.end(), victim), file.peaks.end());
  EXPECT_EQ(file.annotator, "tester");
  EXPECT_EQ(parse_annotations(read_file(dir / "store" / "rec1.annotations.json")), file);
}

TEST(AnnotatorServer, ScriptedSession) {
  const auto dir = fresh_dir("script");
  AnnotatorService svc(options(dir / "store"));
  svc.open_signal(write_signal(dir, "s"));
  Running run(svc);
  auto cli = run.client();
  auto expected = body_of(cli.Get("/api/session/s/peaks"))["peaks"].get<std::vector<double>>();
  std::uint64_t v = 0;
  auto post = [&](const std::string& kind, double t, double t2) {
    const auto r = cli.Post("/api/session/s/edit", edit_body(kind, t, t2, v), "application/json");
    EXPECT_EQ(r->status, 200) << r->body;
    v = body_of(r)["version"].get<std::uint64_t>();
  };
  post("add", 12.5, 0);
  expected.insert(std::upper_bound(expected.begin(), expected.end(), 12.5), 12.5);
  post("move", 12.5, 12.4);
  *std::find(expected.begin(), expected.end(), 12.5) = 12.4;
  post("delete", expected[3], 0);
  expected.erase(expected.begin() + 3);
  post("mark_blank", 20.2, 22.8);
  post("undo", 0, 0);
  // stale version
  const auto stale = cli.Post("/api/session/s/edit", edit_body("add", 1.5, 0, 0), "application/json");
  EXPECT_EQ(stale->status, 409);
  const auto file = parse_annotations(cli.Post("/api/session/s/export", "", "text/plain")->body);
  EXPECT_EQ(file.peaks, expected);
  EXPECT_TRUE(file.blank_regions.empty());
  EXPECT_EQ(file.version, 5u);
}

TEST(AnnotatorServer, ConcurrentEditsSameVersion) {
  const auto dir = fresh_dir("race");
  AnnotatorService svc(options(dir / "store"));
  svc.open_signal(write_signal(dir, "r"));
  Running run(svc);
  std::vector<int> status(2);
  std::vector<std::thread> ts;
  for (int i = 0; i < 2; ++i) {
    ts.emplace_back([&, i] {
      auto cli = run.client();
      const auto r = cli.Post("/api/session/r/edit", edit_body("add", 5.5 + i * 0.3, 0, 0), "application/json");
      status[i] = r ? r->status : -1;
    });
  }
  for (auto& t : ts) t.join();
  std::sort(status.begin(), status.end());
  EXPECT_EQ(status, (std::vector<int>{200, 409}));
  EXPECT_EQ(svc.session("r").version(), 1u);
}

TEST(AnnotatorServer, RestartRestoresSessions) {
  const auto dir = fresh_dir("restart");
  const auto sig = write_signal(dir, "p");
  AnnotationSession before;
  {
    AnnotatorService svc(options(dir / "store"));
    svc.open_signal(sig);
    Running run(svc);
    auto cli = run.client();
    const auto peaks = body_of(cli.Get("/api/session/p/peaks"))["peaks"].get<std::vector<double>>();
    cli.Post("/api/session/p/edit", edit_body("delete", peaks[2], 0, std::nullopt), "application/json");
    cli.Post("/api/session/p/edit", edit_body("mark_blank", 14.2, 17.9, std::nullopt), "application/json");
    cli.Post("/api/session/p/edit", edit_body("add", 3.33, 0, std::nullopt), "application/json");
    before = svc.session("p");
    svc.persist_all();
  }
  AnnotatorService again(options(dir / "store"));
  again.open_signal(sig);
  const auto after = again.session("p");
  EXPECT_EQ(after.peaks(), before.peaks());
  EXPECT_EQ(after.blank_regions(), before.blank_regions());
  EXPECT_EQ(after.version(), before.version());
  EXPECT_EQ(after.edit_log(), before.edit_log());
  EXPECT_EQ(after.annotator, "tester");
}

TEST(AnnotatorServer, CorruptStoreRefused) {
  const auto dir = fresh_dir("corrupt");
  const auto sig = write_signal(dir, "c");
  {
    AnnotatorService svc(options(dir / "store"));
    svc.open_signal(sig);
    svc.post_edit("c", edit_body("add", 2.5, 0, std::nullopt));
  }
  const auto path = dir / "store" / "c.session.json";
  auto j = nlohmann::json::parse(read_file(path));
  j["version"] = 7;
  write_file_atomic(path, j.dump());
  AnnotatorService svc(options(dir / "store"));
  try {
    svc.open_signal(sig);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("corrupt session store"), std::string::npos);
  }
  write_file_atomic(path, "{not json");
  AnnotatorService svc2(options(dir / "store"));
  EXPECT_THROW(svc2.open_signal(sig), Error);
}

TEST(AnnotatorServer, SignalDecimationAndRr) {
  const auto dir = fresh_dir("signal");
  AnnotatorService svc(options(dir / "store"));
  svc.open_signal(write_signal(dir, "d"));
  Running run(svc);
  auto cli = run.client();
  const auto all = body_of(cli.Get("/api/session/d/signal?from=0&to=10&max_points=100000"));
  EXPECT_EQ(all["t"].size(), 641u);
  EXPECT_FALSE(all["decimated"].get<bool>());
  const auto few = body_of(cli.Get("/api/session/d/signal?from=0&to=10&max_points=50"));
  EXPECT_EQ(few["t"].size(), 50u);
  EXPECT_TRUE(few["decimated"].get<bool>());
  // bucket extremes bound the raw samples
  const auto mins = few["min"].get<std::vector<double>>(), maxs = few["max"].get<std::vector<double>>();
  EXPECT_NEAR(*std::max_element(maxs.begin(), maxs.end()), 1.3, 1e-9);
  EXPECT_LE(*std::min_element(mins.begin(), mins.end()), -0.5);

  const auto rr = body_of(cli.Get("/api/session/d/rr"));
  const auto expect = svc.session("d").rr_intervals();
  ASSERT_EQ(rr["rr"].size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(rr["rr"][i]["rr_ms"].get<double>(), expect[i].second);
}

TEST(AnnotatorServer, ErrorStatuses) {
  const auto dir = fresh_dir("errors");
  AnnotatorService svc(options(dir / "store"));
  svc.open_signal(write_signal(dir, "e"));
  Running run(svc);
  auto cli = run.client();
  EXPECT_EQ(cli.Get("/api/session/missing/peaks")->status, 404);
  EXPECT_EQ(cli.Post("/api/session/e/edit", "{bad", "application/json")->status, 400);
  EXPECT_EQ(cli.Post("/api/session/e/edit", R"({"edit":{"kind":"zap"}})", "application/json")->status, 400);
  EXPECT_EQ(cli.Post("/api/session/e/edit", edit_body("delete", 0.5, 0, std::nullopt), "application/json")->status, 404);
  const auto r = cli.Post("/api/session/e/edit", edit_body("undo", 0, 0, std::nullopt), "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(body_of(r)["error"], "validation");
  EXPECT_EQ(body_of(cli.Get("/api/sessions")), nlohmann::json::array({"e"}));
}
