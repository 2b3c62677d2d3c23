// longattn CLI: mask visualization, verification, complexity benchmarks,
// toy seq2seq training, and corpus evaluation.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "longattn/commands.hpp"

namespace {

// Writes to --out when given, stdout otherwise.
struct OutputTarget {
  std::ofstream file;
  std::ostream* stream = &std::cout;
  bool open(const std::string& path, bool binary, std::string& error) {
    if (path.empty()) return true;
    file.open(path, binary ? std::ios::binary : std::ios::out);
    if (!file) {
      error = "cannot open output file '" + path + "'";
      return false;
    }
    stream = &file;
    return true;
  }
};

void add_pattern_flags(CLI::App* cmd, longattn::CommandConfig& cfg) {
  cmd->add_option("--pattern", cfg.pattern,
                  "pattern: full|window|adaptive|global|stride|random|hepos");
  cmd->add_option("--n", cfg.n, "sequence (key) length");
  cmd->add_option("--m", cfg.m, "query length (hepos panels); defaults to n");
  cmd->add_option("--w", cfg.w, "window width (even)");
  cmd->add_option("--g", cfg.g, "global token count");
  cmd->add_option("--s", cfg.s, "stride interval");
  cmd->add_option("--r", cfg.r, "random keys per query (block size)");
  cmd->add_option("--span", cfg.span, "adaptive span z");
  cmd->add_option("--ramp", cfg.ramp, "adaptive span ramp width");
  cmd->add_option("--sh", cfg.sh, "hepos stride s_h");
  cmd->add_option("--heads", cfg.heads, "attention head count");
  cmd->add_option("--seed", cfg.seed, "RNG seed (default: LONGATTN_SEED or 0)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"efficient attention patterns, kernels, complexity ledger, toy seq2seq, and "
               "summary evaluation"};
  app.require_subcommand(1);

  longattn::CommandConfig cfg;
  if (const char* env = std::getenv("LONGATTN_SEED"))
    cfg.seed = std::strtoull(env, nullptr, 10);

  CLI::App* mask = app.add_subcommand("mask", "render an attention mask (text grid or PGM)");
  add_pattern_flags(mask, cfg);
  mask->add_option("--format", cfg.format, "text|pgm")->check(CLI::IsMember({"text", "pgm"}));
  mask->add_option("--out", cfg.out_path, "output file (default: stdout)");

  CLI::App* verify =
      app.add_subcommand("verify", "run kernel-vs-oracle and gradient-check suites");
  verify->add_option("--seed", cfg.seed, "RNG seed");
  verify->add_flag("--fault", cfg.fault, "flip one mask bit; the suite must fail");
  verify->add_option("--out", cfg.out_path, "output file (default: stdout)");

  CLI::App* bench = app.add_subcommand("bench", "measured vs closed-form attended-cell table");
  bench->add_option("--n", cfg.n_list, "sequence lengths (default: 16 64 256 1024)");
  bench->add_option("--w", cfg.w, "window width");
  bench->add_option("--span", cfg.span, "adaptive span");
  bench->add_option("--k", cfg.k, "low-rank length");
  bench->add_option("--l", cfg.l, "lsh rounds");
  bench->add_option("--bl", cfg.bl, "lsh bucket size");
  bench->add_option("--bs", cfg.bs, "sinkhorn block size");
  bench->add_option("--g", cfg.g, "global token count");
  bench->add_option("--s", cfg.s, "stride interval");
  bench->add_option("--r", cfg.r, "random keys per query");
  bench->add_option("--sh", cfg.sh, "hepos stride");
  bench->add_option("--seed", cfg.seed, "RNG seed");
  bench->add_option("--format", cfg.format, "text|csv")->check(CLI::IsMember({"text", "csv"}));
  bench->add_flag("--strict", cfg.strict, "exit 1 when the parity constraints are violated");
  bench->add_option("--out", cfg.out_path, "output file (default: stdout)");

  CLI::App* train = app.add_subcommand("train", "train the toy seq2seq; emits a CSV loss log");
  train->add_option("--task", cfg.task, "copy|reverse|strided_pick")
      ->check(CLI::IsMember({"copy", "reverse", "strided_pick"}));
  train->add_option("--encdec", cfg.encdec, "full|linformer|hepos")
      ->check(CLI::IsMember({"full", "linformer", "hepos"}));
  train->add_option("--length", cfg.length, "source length");
  train->add_option("--vocab", cfg.vocab, "vocabulary size");
  train->add_option("--count", cfg.count, "dataset size");
  train->add_option("--steps", cfg.steps, "training steps");
  train->add_option("--lr", cfg.lr, "learning rate");
  train->add_option("--batch", cfg.batch, "batch size");
  train->add_option("--heads", cfg.heads, "attention heads");
  train->add_option("--dmodel", cfg.d_model, "embedding dimension");
  train->add_option("--sh", cfg.sh, "hepos stride");
  train->add_option("--k", cfg.k, "linformer projected length");
  train->add_option("--eval-every", cfg.eval_every, "steps between accuracy evaluations");
  train->add_option("--seed", cfg.seed, "RNG seed");
  train->add_option("--out", cfg.out_path, "output file (default: stdout)");

  CLI::App* eval = app.add_subcommand("eval", "score a corpus: per-record APES/APES_src + stats");
  eval->add_option("--in", cfg.in_path, "line-delimited JSON corpus")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--budget", cfg.budget, "greedy context budget (sentences)");
  eval->add_option("--seed", cfg.seed, "RNG seed");
  eval->add_option("--out", cfg.out_path, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? longattn::kExitOk : longattn::kExitUsage;
  }

  OutputTarget target;
  std::string error;
  if (!target.open(cfg.out_path, cfg.format == "pgm", error)) {
    std::cerr << error << "\n";
    return longattn::kExitUsage;
  }

  if (app.got_subcommand(mask)) {
    cfg.heads = mask->count("--heads") ? cfg.heads : 1;
    return longattn::cmd_mask(cfg, *target.stream, std::cerr);
  }
  if (app.got_subcommand(verify)) return longattn::cmd_verify(cfg, *target.stream, std::cerr);
  if (app.got_subcommand(bench)) return longattn::cmd_bench(cfg, *target.stream, std::cerr);
  if (app.got_subcommand(train)) return longattn::cmd_train(cfg, *target.stream, std::cerr);
  if (app.got_subcommand(eval)) {
    std::ifstream in(cfg.in_path);
    if (!in) {
      std::cerr << "cannot open corpus '" << cfg.in_path << "'\n";
      return longattn::kExitUsage;
    }
    return longattn::cmd_eval(cfg, in, *target.stream, std::cerr);
  }
  return longattn::kExitUsage;
}
