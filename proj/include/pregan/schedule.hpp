#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pregan/errors.hpp"

namespace pregan {

// Task-to-host placement matrix (p x m, row-major). Rows of an executable
// schedule are one-hot; amended schedules (S + delta) may hold reals, and
// their placement is the per-row argmax.
struct Schedule {
  std::size_t hosts = 0;
  std::vector<std::int64_t> task_ids;
  // Host each task ran on in the previous interval, -1 for new arrivals.
  std::vector<int> previous_host;
  std::vector<double> matrix;

  std::size_t tasks() const { return task_ids.size(); }
  double at(std::size_t row, std::size_t host) const { return matrix[row * hosts + host]; }
  double& at(std::size_t row, std::size_t host) { return matrix[row * hosts + host]; }

  static Schedule from_placements(std::size_t m, std::vector<std::int64_t> ids,
                                  std::vector<int> previous, const std::vector<int>& placement) {
    if (ids.size() != placement.size() || ids.size() != previous.size()) {
      throw ScheduleError("schedule rows disagree in length");
    }
    Schedule s;
    s.hosts = m;
    s.task_ids = std::move(ids);
    s.previous_host = std::move(previous);
    s.matrix.assign(s.task_ids.size() * m, 0.0);
    for (std::size_t r = 0; r < placement.size(); ++r) {
      if (placement[r] < 0 || static_cast<std::size_t>(placement[r]) >= m) {
        throw ScheduleError("task " + std::to_string(s.task_ids[r]) + " placed on nonexistent host " +
                            std::to_string(placement[r]));
      }
      s.at(r, static_cast<std::size_t>(placement[r])) = 1.0;
    }
    return s;
  }

  // Per-row argmax; ties go to the lowest host index.
  std::vector<int> placements() const {
    std::vector<int> out(tasks());
    for (std::size_t r = 0; r < tasks(); ++r) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < hosts; ++j)
        if (at(r, j) > at(r, best)) best = j;
      out[r] = static_cast<int>(best);
    }
    return out;
  }

  bool is_one_hot() const {
    for (std::size_t r = 0; r < tasks(); ++r) {
      int ones = 0;
      for (std::size_t j = 0; j < hosts; ++j) {
        const double v = at(r, j);
        if (v == 1.0) {
          ++ones;
        } else if (v != 0.0) {
          return false;
        }
      }
      if (ones != 1) return false;
    }
    return true;
  }

  // Tasks per host.
  std::vector<int> occupancy() const {
    std::vector<int> count(hosts, 0);
    for (int h : placements()) ++count[static_cast<std::size_t>(h)];
    return count;
  }
};

}  // namespace pregan
