// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace lidarsim {
namespace {

int workers_from_env() {
  if (const char* env = std::getenv("LIDARSIM_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<int>& worker_setting() {
  static std::atomic<int> workers{workers_from_env()};
  return workers;
}

}  // namespace

int default_workers() { return worker_setting().load(); }

void set_default_workers(int workers) { worker_setting().store(std::max(workers, 1)); }

}  // namespace lidarsim
