#pragma once

#include <chrono>
#include <fstream>
#include <thread>

#include "echodet/core/common.hpp"

namespace echodet {

struct FpsResult {
  double fps = 0;
  double median_latency_ms = 0;
  int warmup = 0, iters = 0;
  std::string hardware;
};

inline std::string hardware_descriptor() {
  std::string model = "unknown CPU";
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  int cores = 0;
  while (std::getline(f, line)) {
    if (line.rfind("model name", 0) == 0) {
      ++cores;
      auto colon = line.find(':');
      if (colon != std::string::npos && cores == 1) {
        model = line.substr(colon + 1);
        size_t a = model.find_first_not_of(' ');
        if (a != std::string::npos) model = model.substr(a);
      }
    }
  }
  return model + ", " + std::to_string(std::max(cores, 1)) + " logical core(s)";
}

// median end-to-end single-run latency, inverted; warmup runs are excluded
template <class F>
FpsResult fps_benchmark(F&& run_once, int warmup = 10, int iters = 100) {
  ECHODET_CHECK(iters >= 10, "need at least 10 timed iterations, got " << iters);
  for (int i = 0; i < warmup; ++i) run_once();
  std::vector<double> ms(static_cast<size_t>(iters));
  for (int i = 0; i < iters; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    run_once();
    auto t1 = std::chrono::steady_clock::now();
    ms[static_cast<size_t>(i)] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());
  double median = (iters % 2) ? ms[static_cast<size_t>(iters / 2)]
                              : 0.5 * (ms[static_cast<size_t>(iters / 2 - 1)] +
                                       ms[static_cast<size_t>(iters / 2)]);
  FpsResult r;
  r.median_latency_ms = median;
  r.fps = 1000.0 / median;
  r.warmup = warmup;
  r.iters = iters;
  r.hardware = hardware_descriptor();
  return r;
}

}  // namespace echodet
