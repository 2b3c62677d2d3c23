// Command cores behind the CLI: pattern visualization, verification,
// complexity benchmarking, toy training, evaluation. Commands write to the
// given stream so their outputs stay byte-reproducible under a fixed seed.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace longattn {

// exit codes: 0 success, 1 check/parse failure, 2 usage error
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CommandConfig {
  // pattern flags
  std::string pattern = "full";
  std::size_t n = 8;
  std::size_t m = 0;  // 0 = derived (n for self-attention, n/2 for enc-dec)
  std::size_t w = 0;
  std::size_t g = 0;
  std::size_t s = 0;
  std::size_t r = 0;        // random keys per query (= block size)
  std::size_t span = 0;     // adaptive span z
  std::size_t ramp = 32;
  std::size_t sh = 0;       // hepos stride
  std::size_t heads = 1;
  std::size_t k = 0;        // low-rank length
  std::size_t l = 4;        // lsh rounds
  std::size_t bl = 64;      // lsh bucket size
  std::size_t bs = 128;     // sinkhorn block size
  std::uint64_t seed = 0;

  // io flags
  std::string in_path;
  std::string out_path;
  std::string format = "text";  // text | csv | pgm

  // run flags
  std::vector<std::size_t> n_list;  // bench sizes
  std::size_t steps = 2000;
  double lr = 2.0;
  std::size_t batch = 8;
  std::size_t beam = 4;
  double alpha = 2.0;
  std::string task = "copy";
  std::string encdec = "full";
  std::size_t length = 16;
  std::size_t vocab = 16;
  std::size_t count = 64;
  std::size_t d_model = 32;
  std::size_t eval_every = 200;
  std::size_t budget = 5;  // context sentences

  bool fault = false;   // verify: flip one mask bit, must fail
  bool strict = false;  // bench: exit 1 on parity violation
};

int cmd_mask(const CommandConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_verify(const CommandConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_bench(const CommandConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const CommandConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const CommandConfig& cfg, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace longattn
