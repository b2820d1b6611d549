// Copyright 2026 the realmsim authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Test-side oracle for the virtual-interrupt injection checks, kept
// independent of the engine it verifies. A benign hypervisor repeatedly
// draws: it stable-sorts the pending records by (priority, arrival) and
// injects the ids of some k-prefix whose ids are pairwise distinct, k <= n.
// A request is benign exactly when it matches a possible first draw.

#include <algorithm>
#include <deque>
#include <set>
#include <vector>

#include "realmsim/rmm.hpp"

namespace realmsim::oracle {

using IdSet = std::set<IntId>;

// All first draws available from `queue` with window `n`, including the
// empty draw (entering the VM with no virtual interrupts is always benign).
inline std::vector<IdSet> benign_first_draws(const std::deque<PendingRecord>& queue,
                                             uint32_t n) {
  std::vector<PendingRecord> sorted(queue.begin(), queue.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PendingRecord& a, const PendingRecord& b) {
                     if (a.priority != b.priority) return a.priority < b.priority;
                     return a.arrival_seq < b.arrival_seq;
                   });

  std::vector<IdSet> draws;
  draws.push_back({});
  IdSet prefix;
  for (const PendingRecord& rec : sorted) {
    if (prefix.size() >= n) break;
    if (!prefix.insert(rec.id).second) break; // duplicate id blocks the draw
    draws.push_back(prefix);
  }
  return draws;
}

inline bool oracle_accepts(const std::vector<IntId>& req,
                           const std::deque<PendingRecord>& queue, uint32_t n) {
  IdSet ids(req.begin(), req.end());
  if (ids.size() != req.size()) return false; // duplicates never benign
  for (const IdSet& draw : benign_first_draws(queue, n)) {
    if (draw == ids) return true;
  }
  return false;
}

// Consumes a draw the way a benign hypervisor's accepted injection would:
// each id takes its earliest record in the sorted order.
inline void consume_draw(std::deque<PendingRecord>& queue, const IdSet& draw) {
  std::vector<size_t> order(queue.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (queue[a].priority != queue[b].priority)
      return queue[a].priority < queue[b].priority;
    return queue[a].arrival_seq < queue[b].arrival_seq;
  });

  std::set<size_t> to_erase;
  for (IntId id : draw) {
    for (size_t pos : order) {
      if (queue[pos].id == id && !to_erase.count(pos)) {
        to_erase.insert(pos);
        break;
      }
    }
  }
  std::deque<PendingRecord> rest;
  for (size_t i = 0; i < queue.size(); ++i)
    if (!to_erase.count(i)) rest.push_back(queue[i]);
  queue.swap(rest);
}

// Every benign draw sequence from `queue`, depth-first, up to `max_depth`
// batches. Used to cross-check that the engine accepts whole benign traces.
inline void enumerate_benign_traces(const std::deque<PendingRecord>& queue, uint32_t n,
                                    size_t max_depth,
                                    std::vector<std::vector<IdSet>>& out,
                                    std::vector<IdSet> prefix = {}) {
  if (prefix.size() >= max_depth || queue.empty()) {
    out.push_back(prefix);
    return;
  }
  for (const IdSet& draw : benign_first_draws(queue, n)) {
    if (draw.empty()) continue; // skip idle entries, they do not consume
    std::deque<PendingRecord> next = queue;
    consume_draw(next, draw);
    auto extended = prefix;
    extended.push_back(draw);
    enumerate_benign_traces(next, n, max_depth, out, extended);
  }
  if (queue.empty()) out.push_back(prefix);
}

} // namespace realmsim::oracle
