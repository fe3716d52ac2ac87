#pragma once

// Environment fragments of a given size: every fragment when there are at
// most 1024 of them, a seeded uniform sample of 256 otherwise, and a single
// representative {1..k} for environment-symmetric universes.

#include "darwinbounds/qstate.hpp"
#include "darwinbounds/random.hpp"

#include <map>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

namespace darwinbounds {

struct FragmentPolicy {
  std::size_t exhaustive_cap = 1024;
  std::size_t samples = 256;
  std::uint64_t seed = 0;
};

/// C(n, k), saturating at `cap` + 1.
inline std::size_t binomial_capped(std::size_t n, std::size_t k, std::size_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > static_cast<double>(cap) + 0.5) return cap + 1;
  }
  return static_cast<std::size_t>(std::llround(c));
}

/// Calls fn(FragmentSpec) for every k-subset of `items`, in lexicographic order.
template <class Fn>
void for_each_combination(const std::vector<std::size_t>& items, std::size_t k, Fn&& fn) {
  const std::size_t n = items.size();
  if (k > n) return;
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    std::vector<std::size_t> pick(k);
    for (std::size_t i = 0; i < k; ++i) pick[i] = items[idx[i]];
    fn(FragmentSpec(std::move(pick)));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

namespace detail {

/// First `count` entries of a seeded partial Fisher-Yates shuffle of items.
inline std::vector<std::size_t> random_prefix(std::vector<std::size_t> items, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(count);
  return items;
}

}  // namespace detail

class FragmentCatalog {
 public:
  FragmentCatalog(std::size_t n_env, bool symmetric, FragmentPolicy policy = {})
      : n_env_(n_env), symmetric_(symmetric), policy_(policy) {
    env_.resize(n_env);
    std::iota(env_.begin(), env_.end(), 1);
  }

  std::size_t n_env() const { return n_env_; }
  bool symmetric() const { return symmetric_; }

  /// True when of_size(k) lists every fragment of size k (or the symmetric
  /// representative, which stands for all of them).
  bool exhaustive(std::size_t k) const {
    return symmetric_ || binomial_capped(n_env_, k, policy_.exhaustive_cap) <= policy_.exhaustive_cap;
  }

  const std::vector<FragmentSpec>& of_size(std::size_t k) {
    auto it = by_size_.find(k);
    if (it != by_size_.end()) return it->second;
    std::vector<FragmentSpec> out;
    if (k <= n_env_) {
      if (symmetric_) {
        out.push_back(FragmentSpec::range(1, k + 1));
      } else if (exhaustive(k)) {
        for_each_combination(env_, k, [&](FragmentSpec f) { out.push_back(std::move(f)); });
      } else {
        Rng rng = Rng::substream(policy_.seed, k);
        std::set<FragmentSpec> seen;
        while (out.size() < policy_.samples) {
          FragmentSpec f(detail::random_prefix(env_, k, rng));
          if (seen.insert(f).second) out.push_back(std::move(f));
        }
      }
    }
    return by_size_.emplace(k, std::move(out)).first->second;
  }

  /// Disjoint (F_k, F_l) pairs.
  std::vector<std::pair<FragmentSpec, FragmentSpec>> pairs(std::size_t k, std::size_t l) {
    std::vector<std::pair<FragmentSpec, FragmentSpec>> out;
    if (k + l > n_env_ || k == 0 || l == 0) return out;
    if (symmetric_) {
      out.emplace_back(FragmentSpec::range(1, k + 1), FragmentSpec::range(k + 1, k + l + 1));
      return out;
    }
    const std::size_t cap = policy_.exhaustive_cap;
    const std::size_t nk = binomial_capped(n_env_, k, cap);
    const std::size_t nl = binomial_capped(n_env_ - k, l, cap);
    if (nk <= cap && nl <= cap && nk * nl <= cap) {
      for_each_combination(env_, k, [&](const FragmentSpec& fk) {
        std::vector<std::size_t> rest;
        for (auto i : env_)
          if (!fk.contains(i)) rest.push_back(i);
        for_each_combination(rest, l, [&](FragmentSpec fl) { out.emplace_back(fk, std::move(fl)); });
      });
      return out;
    }
    Rng rng = Rng::substream(policy_.seed ^ 0x5eedULL, (k << 20U) | l);
    std::set<std::pair<FragmentSpec, FragmentSpec>> seen;
    while (out.size() < policy_.samples) {
      const auto pick = detail::random_prefix(env_, k + l, rng);
      FragmentSpec fk(std::vector<std::size_t>(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k)));
      FragmentSpec fl(std::vector<std::size_t>(pick.begin() + static_cast<std::ptrdiff_t>(k), pick.end()));
      auto pr = std::make_pair(std::move(fk), std::move(fl));
      if (seen.insert(pr).second) out.push_back(std::move(pr));
    }
    return out;
  }

 private:
  std::size_t n_env_;
  bool symmetric_;
  FragmentPolicy policy_;
  std::vector<std::size_t> env_;
  std::map<std::size_t, std::vector<FragmentSpec>> by_size_;
};

}  // namespace darwinbounds
