// End-to-end checks of the command-line tool via subprocesses.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "lexinmt/common.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::string g_cli;

void check(bool ok, const std::string& what) {
  if (ok) {
    std::cout << "ok: " << what << "\n";
  } else {
    std::cout << "FAIL: " << what << "\n";
    ++g_failures;
  }
}

struct RunResult {
  int status = -1;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
  std::string cmd = g_cli + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  RunResult res;
  if (!pipe) return res;
  char buf[4096];
  while (fgets(buf, sizeof(buf), pipe)) res.output += buf;
  int rc = pclose(pipe);
  res.status = WEXITSTATUS(rc);
  return res;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_tests <path-to-lexinmt>\n";
    return 2;
  }
  g_cli = argv[1];
  fs::path dir = fs::temp_directory_path() / "lexinmt_cli_tests";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string();

  // synth: counts line, subset chain, determinism
  RunResult synth = run("synth --out " + d + "/c1 --n-lexicons 5 --n-candidates 3 "
                        "--n-sentences 80 --seed 7");
  check(synth.status == 0, "synth exits zero");
  check(synth.output.find("constrained") != std::string::npos,
        "synth prints a counts table");
  check(fs::exists(d + "/c1/inventory.tsv") && fs::exists(d + "/c1/train.jsonl") &&
            fs::exists(d + "/c1/manifest.json"),
        "synth writes inventory, splits and manifest");

  RunResult synth2 = run("synth --out " + d + "/c2 --n-lexicons 5 --n-candidates 3 "
                         "--n-sentences 80 --seed 7");
  check(synth2.status == 0, "second synth exits zero");
  check(lexinmt::read_file(d + "/c1/train.jsonl") ==
            lexinmt::read_file(d + "/c2/train.jsonl"),
        "same seed gives identical corpus files");

  // missing input: actionable error naming the file, nonzero exit, no output
  RunResult missing = run("evaluate --hyps " + d + "/nope.jsonl --refs " + d +
                          "/c1/test.jsonl --out " + d + "/r.json");
  check(missing.status != 0, "evaluate with missing input exits nonzero");
  check(missing.output.find("nope.jsonl") != std::string::npos,
        "error names the absent file");
  check(!fs::exists(d + "/r.json"), "no partial report left behind");

  // tiny end-to-end: train stage1 + template nmt, translate, evaluate
  RunResult ts1 = run("train-stage1 --train " + d + "/c1/train.jsonl --inventory " +
                      d + "/c1/inventory.tsv --out " + d + "/s1.lxf "
                      "--steps 30 --batch 4 --d-model 16 --ffn 24 --seed 3");
  check(ts1.status == 0, "train-stage1 runs");

  RunResult dis = run("disambiguate --ckpt " + d + "/s1.lxf --input " + d +
                      "/c1/test.jsonl --out " + d + "/dis.jsonl");
  check(dis.status == 0, "disambiguate runs");

  RunResult tn = run("train-nmt --backend template --train " + d +
                     "/c1/train.jsonl --out " + d + "/tem.lxf "
                     "--steps 40 --batch 4 --d-model 16 --ffn 24 --seed 3");
  check(tn.status == 0, "train-nmt template runs");

  RunResult tr = run("translate --ckpt " + d + "/tem.lxf --input " + d +
                     "/c1/test.jsonl --out " + d + "/hyp.jsonl "
                     "--selector stage1 --stage1 " + d + "/dis.jsonl --beam 2");
  check(tr.status == 0, "translate with the stage1 selector runs");

  RunResult ev = run("evaluate --hyps " + d + "/hyp.jsonl --refs " + d +
                     "/c1/test.jsonl --out " + d + "/report.json --stage1 " + d +
                     "/dis.jsonl");
  check(ev.status == 0, "evaluate runs");
  check(fs::exists(d + "/report.json"), "evaluate writes the report");

  // template route guarantees the selected constraints appear: with
  // selector gold the evaluate exact-match must be exactly 100
  RunResult trg = run("translate --ckpt " + d + "/tem.lxf --input " + d +
                      "/c1/test.jsonl --out " + d + "/hypg.jsonl "
                      "--selector gold --beam 2");
  check(trg.status == 0, "translate with the gold selector runs");
  RunResult evg = run("evaluate --hyps " + d + "/hypg.jsonl --refs " + d +
                      "/c1/test.jsonl --out " + d + "/reportg.json");
  check(evg.status == 0, "evaluate (gold template route) runs");
  check(evg.output.find("100.00") != std::string::npos,
        "gold template route reports an exact-match of 100");

  // LEXI_SEED override: corpus must differ from seed 7
  setenv("LEXI_SEED", "99", 1);
  RunResult env_synth = run("synth --out " + d + "/c3 --n-lexicons 5 "
                            "--n-candidates 3 --n-sentences 80 --seed 7");
  unsetenv("LEXI_SEED");
  check(env_synth.status == 0, "synth with LEXI_SEED runs");
  check(lexinmt::read_file(d + "/c1/train.jsonl") !=
            lexinmt::read_file(d + "/c3/train.jsonl"),
        "LEXI_SEED overrides the configured seed");

  fs::remove_all(dir);
  if (g_failures) {
    std::cout << g_failures << " cli check(s) failed\n";
    return 1;
  }
  std::cout << "all cli checks passed\n";
  return 0;
}
