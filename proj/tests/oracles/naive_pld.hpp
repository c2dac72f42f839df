#pragma once

// Quadratic prompt-lookup scanner: walk the cache backwards for the latest
// occurrence of the suffix that still has a following token.

#include <string>
#include <vector>

namespace oracle {

inline std::vector<std::string> naive_propose(const std::vector<std::string>& cache,
                                              const std::vector<std::string>& suffix, std::size_t max_draft) {
  const std::size_t n = suffix.size();
  if (cache.size() <= n) return {};
  for (std::size_t start = cache.size() - n; start-- > 0;) {
    bool same = true;
    for (std::size_t i = 0; i < n && same; ++i) same = cache[start + i] == suffix[i];
    if (!same) continue;
    std::vector<std::string> out;
    for (std::size_t i = start + n; i < cache.size() && out.size() < max_draft; ++i) out.push_back(cache[i]);
    return out;
  }
  return {};
}

}  // namespace oracle
