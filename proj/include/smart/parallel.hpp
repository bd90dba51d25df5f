// Copyright 2026 The SMART Retrieval Authors.
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

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace smart {

struct Chunk {
  std::size_t worker = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Splits [0, n) into at most `workers` contiguous chunks; chunk boundaries
// depend only on (n, workers).
inline std::vector<Chunk> make_chunks(std::size_t n, std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, std::max<std::size_t>(n, 1)));
  std::vector<Chunk> chunks;
  std::size_t base = n / workers, extra = n % workers, at = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t len = base + (w < extra ? 1 : 0);
    chunks.push_back({w, at, at + len});
    at += len;
  }
  return chunks;
}

// Runs `fn(chunk)` for every chunk, one thread per chunk. If several chunks
// throw, the exception from the lowest-numbered chunk is rethrown so error
// reporting does not depend on scheduling.
template <typename Fn>
void run_chunks(const std::vector<Chunk>& chunks, Fn&& fn) {
  std::vector<std::exception_ptr> errors(chunks.size());
  if (chunks.size() <= 1) {
    for (const auto& c : chunks) fn(c);
    return;
  }
  {
    std::vector<std::jthread> threads;
    threads.reserve(chunks.size());
    for (std::size_t w = 0; w < chunks.size(); ++w) {
      threads.emplace_back([&, w] {
        try {
          fn(chunks[w]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Element-wise parallel loop; `fn(i)` must only write to slot i.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  run_chunks(make_chunks(n, workers), [&](const Chunk& c) {
    for (std::size_t i = c.begin; i < c.end; ++i) fn(i);
  });
}

}  // namespace smart
