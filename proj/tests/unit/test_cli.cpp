#include <fstream>
#include <iterator>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "alignreid/cli.hpp"
#include "alignreid/humaneval.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int status;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = areid::cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::size_t count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// 24px people, enough test identities for a gallery of more than ten.
struct Workspace {
  testing::TempDir dir{"cli"};
  fs::path data_cfg = dir / "data.cfg", train_cfg = dir / "train.cfg";

  Workspace() {
    write(data_cfg,
          "image_size=24\nbands=4\nmargin=2\nmax_shift=2\ntrain_identities=6\n"
          "test_identities=8\nimages_per_identity=4\n");
    write(train_cfg, "input_size=24\nchannel_plan=8,16\nstrides=2,2\nlocal_channels=4\np=4\nk=3\n");
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("gen-data is byte-identical across runs") {
  Workspace w;
  for (const char* out : {"a", "b"})
    REQUIRE(run({"gen-data", "--config", w.data_cfg.string(), "--out", w.p(out)}).status == 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(w.dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto twin = w.dir / "b" / fs::relative(e.path(), w.dir / "a");
    INFO(e.path().string());
    CHECK(slurp(e.path()) == slurp(twin));
  }
  CHECK(files > 50);
  CHECK(run({"gen-data", "--config", w.data_cfg.string(), "--out", w.p("c"), "--seed", "8"}).status == 0);
  CHECK(slurp(w.dir / "a" / "manifest.csv") == slurp(w.dir / "c" / "manifest.csv"));
  CHECK_FALSE(slurp(w.dir / "a" / "settings.cfg") == slurp(w.dir / "c" / "settings.cfg"));
}

TEST_CASE("exit statuses") {
  Workspace w;
  CHECK(run({}).status == areid::cli::kBadConfig);
  CHECK(run({"gen-data", "--out", w.p("x"), "--bogus"}).status == areid::cli::kBadConfig);
  CHECK(run({"train", "--data", w.p("x"), "--out", w.p("t"), "--variant", "fancy"}).status ==
        areid::cli::kBadConfig);
  write(w.dir / "unknown.cfg", "colour=red\n");
  CHECK(run({"gen-data", "--config", w.p("unknown.cfg"), "--out", w.p("x")}).status ==
        areid::cli::kBadConfig);
  const auto missing = run({"eval", "--query", w.p("none.arid"), "--gallery", w.p("none.arid"),
                            "--out", w.p("e")});
  CHECK(missing.status == areid::cli::kMissingFile);
  CHECK(missing.err.find("none.arid") != std::string::npos);
  CHECK(run({"train", "--data", w.p("nowhere"), "--out", w.p("t")}).status == areid::cli::kMissingFile);
  CHECK(run({"--help"}).status == 0);
}

TEST_CASE("end-to-end pipeline") {
  Workspace w;
  const auto d = w.p("data");
  REQUIRE(run({"gen-data", "--config", w.data_cfg.string(), "--out", d}).status == 0);

  const auto tr = run({"train", "--config", w.train_cfg.string(), "--data", d, "--out", w.p("t"),
                       "--epochs", "2", "--batches", "3", "--variant", "aligned"});
  REQUIRE(tr.status == 0);
  // Two epochs of three steps plus the header.
  CHECK(count_lines(w.dir / "t" / "loss.csv") == 7);
  CHECK(fs::exists(w.dir / "t" / "final.arwt"));
  CHECK(slurp(w.dir / "t" / "settings.cfg").find("epochs=2") != std::string::npos);

  const auto tm = run({"train-mutual", "--config", w.train_cfg.string(), "--data", d, "--out",
                       w.p("tm"), "--epochs", "1", "--batches", "2", "--eval-every", "0"});
  REQUIRE(tm.status == 0);
  CHECK(count_lines(w.dir / "tm" / "first_loss.csv") == 3);
  CHECK(fs::exists(w.dir / "tm" / "second_final.arwt"));

  REQUIRE(run({"embed", "--data", d, "--checkpoint", w.p("t/final.arwt"), "--out", w.p("e"),
               "--splits", "query,gallery", "--with-local"})
              .status == 0);
  const auto q = w.p("e/query.arid"), g = w.p("e/gallery.arid");

  SUBCASE("re-ranking with lambda one matches plain evaluation") {
    REQUIRE(run({"eval", "--query", q, "--gallery", g, "--out", w.p("plain")}).status == 0);
    REQUIRE(run({"eval", "--query", q, "--gallery", g, "--out", w.p("re"), "--rerank", "--lambda", "1"})
                .status == 0);
    const json a = json::parse(slurp(w.dir / "plain" / "eval.json"));
    const json b = json::parse(slurp(w.dir / "re" / "eval.json"));
    CHECK(a["map"].get<double>() == doctest::Approx(b["map"].get<double>()).epsilon(1e-12));
    CHECK(a["cmc"] == b["cmc"]);
    CHECK(run({"eval", "--query", q, "--gallery", g, "--out", w.p("c"), "--combined"}).status == 0);
  }

  SUBCASE("alignment rendering") {
    const auto img = fs::directory_iterator(w.dir / "data" / "images")->path().string();
    REQUIRE(run({"align-viz", img, img, "--checkpoint", w.p("t/final.arwt"), "--out", w.p("av")})
                .status == 0);
    CHECK(slurp(w.dir / "av" / "alignment.svg").find("</svg>") != std::string::npos);
    CHECK(fs::exists(w.dir / "av" / "path.txt"));
  }

  SUBCASE("human evaluation build and score") {
    REQUIRE(run({"humaneval-build", "--data", d, "--query", q, "--gallery", g, "--out", w.p("h"),
                 "--annotators", "ann,bob", "--seed", "3"})
                .status == 0);
    const auto study = areid::humaneval::Study::load(w.dir / "h" / "study.json");
    REQUIRE(!study.items.empty());
    CHECK(study.annotators == std::vector<std::string>{"ann", "bob"});
    for (const auto& [ref, path] : study.images) CHECK(fs::exists(path));

    // "ann" always picks the first displayed candidate.
    std::string log;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < study.items.size(); ++i) {
      log += areid::humaneval::AnswerEvent{"ann", i, 0, 0.0}.to_json() + "\n";
      correct += study.items[i].ground_truth[study.display_order("ann", i)[0]];
    }
    write(w.dir / "h" / "answers.jsonl", log);
    REQUIRE(run({"humaneval-score", "--study", w.p("h/study.json"), "--out", w.p("s")}).status == 0);
    const json rep = json::parse(slurp(w.dir / "s" / "report.json"));
    CHECK(rep["per_annotator"]["ann"]["correct"] == correct);
    CHECK(rep["best"].get<double>() ==
          doctest::Approx(static_cast<double>(correct) / static_cast<double>(study.items.size())));
  }
}
