#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "liftload/core.hpp"
#include "liftload/synth.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("liftload_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Runs a shell command; returns its exit status.
inline int run(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

inline std::string cli() { return LIFTLOAD_CLI; }

// Simple noiseless subject whose response is the same along every channel
// direction scaled by `gain`.
inline liftload::synth::SynthSpec simple_spec(double noise = 0.0, std::uint64_t seed = 5) {
  liftload::synth::SynthSpec s;
  s.subject_id = "T1";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t c = 0; c < liftload::kChannelCount; ++c) {
    s.offset[c] = 5000.0 + 5000.0 * u(rng);
    s.response[c] = 150.0 + 200.0 * u(rng);
  }
  s.noise_sigma = noise;
  s.seed = seed;
  return s;
}

}  // namespace testutil
