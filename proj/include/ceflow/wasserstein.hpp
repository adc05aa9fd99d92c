#pragma once

// Exact W1 distances between discrete probability measures and the W1
// variation of time-indexed slice families.
//
// 1-D uses the CDF identity W1 = int |F_a - F_b|. General dimension solves
// the transport LP by successive shortest augmenting paths on the bipartite
// support graph with Johnson potentials, which is exact and deterministic
// (ties broken by node index).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ceflow/common.hpp"
#include "ceflow/measure.hpp"
#include "ceflow/norms.hpp"

namespace ceflow {

struct TransportPlan {
  std::vector<std::size_t> rows, cols;
  Vec flows;
};

struct VariationProfile {
  Vec times;       // partition nodes
  Vec cumulative;  // V(times[k]), cumulative[0] == 0

  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

namespace detail {

inline void check_probability_pair(const AtomicVectorMeasure& a,
                                   const AtomicVectorMeasure& b, double eps_mass) {
  double ma = 0.0, mb = 0.0;
  for (const Atom& at : a.atoms) {
    if (at.w.size() != 1 || at.w[0] < -1e-12)
      throw std::invalid_argument("w1: weights must be scalar and nonnegative");
    ma += at.w[0];
  }
  for (const Atom& at : b.atoms) {
    if (at.w.size() != 1 || at.w[0] < -1e-12)
      throw std::invalid_argument("w1: weights must be scalar and nonnegative");
    mb += at.w[0];
  }
  if (std::abs(ma - mb) > eps_mass) throw std::invalid_argument("w1: mass mismatch");
}

}  // namespace detail

/// 1-D optimal transport cost via the CDF identity, exact for step CDFs.
inline double w1_1d(const AtomicVectorMeasure& a, const AtomicVectorMeasure& b,
                    double eps_mass = 1e-9) {
  if (a.dim != 1 || b.dim != 1) throw std::invalid_argument("w1_1d: dim must be 1");
  detail::check_probability_pair(a, b, eps_mass);
  // signed jumps of F_a - F_b, swept in position order
  std::vector<std::pair<double, double>> jumps;
  jumps.reserve(a.atoms.size() + b.atoms.size());
  for (const Atom& at : a.atoms) jumps.emplace_back(at.x[0], at.w[0]);
  for (const Atom& at : b.atoms) jumps.emplace_back(at.x[0], -at.w[0]);
  std::sort(jumps.begin(), jumps.end());
  double cost = 0.0, gap = 0.0, prev = 0.0;
  bool first = true;
  for (const auto& [x, dw] : jumps) {
    if (!first) cost += std::abs(gap) * (x - prev);
    gap += dw;
    prev = x;
    first = false;
  }
  return cost;
}

struct W1Result {
  double distance = 0.0;
  TransportPlan plan;
};

/// Transport LP with cost ||x_i - y_j|| in the given norm, solved exactly by
/// successive shortest paths. Returns an optimal feasible plan.
inline W1Result w1_lp(const AtomicVectorMeasure& a, const AtomicVectorMeasure& b,
                      const NormSpec& norm, double eps_mass = 1e-9) {
  if (a.dim != b.dim) throw std::invalid_argument("w1_lp: dim mismatch");
  detail::check_probability_pair(a, b, eps_mass);
  const std::size_t m = a.atoms.size(), n = b.atoms.size();
  W1Result res;
  if (m == 0 || n == 0) return res;

  std::vector<Vec> cost(m, Vec(n));
  Vec diff(a.dim);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (int k = 0; k < a.dim; ++k) diff[k] = a.atoms[i].x[k] - b.atoms[j].x[k];
      cost[i][j] = norm(diff);
    }

  Vec supply(m), demand(n);
  for (std::size_t i = 0; i < m; ++i) supply[i] = std::max(0.0, a.atoms[i].w[0]);
  for (std::size_t j = 0; j < n; ++j) demand[j] = std::max(0.0, b.atoms[j].w[0]);
  // balance roundoff so the loop terminates exactly
  const double total = std::min(std::accumulate(supply.begin(), supply.end(), 0.0),
                                std::accumulate(demand.begin(), demand.end(), 0.0));

  std::vector<Vec> flow(m, Vec(n, 0.0));
  Vec pot_s(m, 0.0), pot_t(n, 0.0);
  const double inf = std::numeric_limits<double>::infinity();
  double shipped = 0.0;
  const double eps_flow = 1e-15 * std::max(1.0, total);

  while (total - shipped > eps_flow) {
    // Dijkstra over sources/sinks with reduced costs; sources with remaining
    // supply seed the frontier at distance 0
    const std::size_t N = m + n;
    Vec dist(N, inf);
    std::vector<int> parent(N, -1);
    std::vector<char> done(N, 0);
    for (std::size_t i = 0; i < m; ++i)
      if (supply[i] > eps_flow) dist[i] = 0.0;
    for (std::size_t it = 0; it < N; ++it) {
      std::size_t u = N;
      double best = inf;
      for (std::size_t v = 0; v < N; ++v)
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      if (u == N) break;
      done[u] = 1;
      if (u < m) {
        for (std::size_t j = 0; j < n; ++j) {
          const double rc = std::max(0.0, cost[u][j] - pot_s[u] + pot_t[j]);
          if (dist[u] + rc < dist[m + j] - 1e-18) {
            dist[m + j] = dist[u] + rc;
            parent[m + j] = static_cast<int>(u);
          }
        }
      } else {
        const std::size_t j = u - m;
        for (std::size_t i = 0; i < m; ++i) {
          if (flow[i][j] <= eps_flow) continue;
          const double rc = std::max(0.0, pot_s[i] - pot_t[j] - cost[i][j]);
          if (dist[u] + rc < dist[i] - 1e-18) {
            dist[i] = dist[u] + rc;
            parent[i] = static_cast<int>(u);
          }
        }
      }
    }
    // closest reachable sink with remaining demand
    std::size_t tgt = N;
    double bestd = inf;
    for (std::size_t j = 0; j < n; ++j)
      if (demand[j] > eps_flow && dist[m + j] < bestd) {
        bestd = dist[m + j];
        tgt = m + j;
      }
    if (tgt == N) break;  // numerically exhausted

    // bottleneck: demand at the head, supply at the root, flow on every
    // reverse arc in between; forward arcs are uncapacitated
    std::size_t root = tgt;
    double push = demand[tgt - m];
    while (parent[root] != -1) {
      const std::size_t p = static_cast<std::size_t>(parent[root]);
      if (root < m) push = std::min(push, flow[root][p - m]);
      root = p;
    }
    push = std::min({push, supply[root], total - shipped});
    if (!(push > 0.0)) break;

    for (std::size_t v = tgt; parent[v] != -1; v = static_cast<std::size_t>(parent[v])) {
      const std::size_t p = static_cast<std::size_t>(parent[v]);
      if (v >= m)
        flow[p][v - m] += push;
      else
        flow[v][p - m] -= push;
    }
    supply[root] -= push;
    demand[tgt - m] -= push;
    shipped += push;

    for (std::size_t i = 0; i < m; ++i)
      if (dist[i] < inf) pot_s[i] -= dist[i];
    for (std::size_t j = 0; j < n; ++j)
      if (dist[m + j] < inf) pot_t[j] -= dist[m + j];
  }

  Vec terms;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (flow[i][j] > 0.0) {
        res.plan.rows.push_back(i);
        res.plan.cols.push_back(j);
        res.plan.flows.push_back(flow[i][j]);
        terms.push_back(flow[i][j] * cost[i][j]);
      }
  res.distance = pairwise_sum(terms);
  return res;
}

/// Distance dispatch: CDF sweep in 1-D, transport LP otherwise.
inline double w1_distance(const AtomicVectorMeasure& a, const AtomicVectorMeasure& b,
                          const NormSpec& norm) {
  return a.dim == 1 ? w1_1d(a, b) : w1_lp(a, b, norm).distance;
}

/// Cumulative W1 variation over the slice grid restricted to [a, b].
inline VariationProfile var_w1(const TimeSlicedMeasure& curve, double a, double b,
                               const NormSpec& norm = {}) {
  if (!(a <= b)) throw std::invalid_argument("var_w1: a > b");
  if (a < curve.times.front() || b > curve.times.back())
    throw std::invalid_argument("var_w1: window outside curve range");
  VariationProfile prof;
  prof.times.push_back(a);
  for (double t : curve.times)
    if (t > a && t < b) prof.times.push_back(t);
  if (b > a) prof.times.push_back(b);
  prof.cumulative.assign(prof.times.size(), 0.0);
  for (std::size_t k = 0; k + 1 < prof.times.size(); ++k) {
    const AtomicVectorMeasure& s0 = curve.slice_at(prof.times[k]);
    const AtomicVectorMeasure& s1 = curve.slice_at(prof.times[k + 1]);
    prof.cumulative[k + 1] = prof.cumulative[k] + w1_distance(s0, s1, norm);
  }
  return prof;
}

/// W1 variation of a continuously sampled slice family, refined dyadically
/// until the total stabilizes below tol or the slice cap is reached.
inline VariationProfile var_w1_dyadic(
    const std::function<AtomicVectorMeasure(double)>& sample, double a, double b,
    const NormSpec& norm = {}, double tol = 1e-8, int max_slices = 1 << 14) {
  if (!(a <= b)) throw std::invalid_argument("var_w1_dyadic: a > b");
  auto profile_for = [&](int n) {
    VariationProfile prof;
    prof.times.resize(static_cast<std::size_t>(n) + 1);
    prof.cumulative.assign(prof.times.size(), 0.0);
    for (int k = 0; k <= n; ++k) prof.times[k] = a + (b - a) * k / n;
    AtomicVectorMeasure prev = sample(prof.times[0]);
    for (int k = 1; k <= n; ++k) {
      AtomicVectorMeasure cur = sample(prof.times[k]);
      prof.cumulative[k] = prof.cumulative[k - 1] + w1_distance(prev, cur, norm);
      prev = std::move(cur);
    }
    return prof;
  };
  VariationProfile prof = profile_for(1);
  for (int n = 2; n <= max_slices; n *= 2) {
    VariationProfile finer = profile_for(n);
    const bool settled = std::abs(finer.total() - prof.total()) < tol;
    prof = std::move(finer);
    if (settled) break;
  }
  return prof;
}

}  // namespace ceflow
