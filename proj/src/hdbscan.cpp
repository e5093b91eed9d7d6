#include "spkclust/hdbscan.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "parallel.hpp"

namespace spkclust {

SelectionMethod parse_selection_method(std::string_view tag) {
  if (tag == "eom") return SelectionMethod::kExcessOfMass;
  if (tag == "leaf") return SelectionMethod::kLeaf;
  throw std::invalid_argument(fmt::format("unknown cluster selection method '{}'", tag));
}

std::vector<double> core_distances(const DistanceMatrix& dm, std::size_t min_samples,
                                   std::size_t threads) {
  const std::size_t n = dm.size();
  if (n < 2) throw std::invalid_argument("core distances need at least 2 points");
  if (min_samples < 1 || min_samples > n - 1) {
    throw std::invalid_argument(
        fmt::format("min_samples must be in [1, {}], got {}", n - 1, min_samples));
  }
  std::vector<double> core(n);
  detail::parallel_rows(n, threads, [&](std::size_t i) {
    if (min_samples == 1) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) best = std::min(best, dm(i, j));
      }
      core[i] = best;
      return;
    }
    std::vector<double> row;
    row.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(dm(i, j));
    }
    auto kth = row.begin() + static_cast<std::ptrdiff_t>(min_samples - 1);
    std::nth_element(row.begin(), kth, row.end());
    core[i] = *kth;
  });
  return core;
}

DistanceMatrix mutual_reachability(const DistanceMatrix& dm, std::span<const double> core) {
  const std::size_t n = dm.size();
  if (core.size() != n) {
    throw std::invalid_argument(
        fmt::format("core distance count {} does not match matrix size {}", core.size(), n));
  }
  DistanceMatrix out(n);
  auto dst = out.condensed();
  auto src = dm.condensed();
  std::size_t k = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++k) {
      dst[k] = static_cast<distance_t>(
          std::max({core[i], core[j], static_cast<double>(src[k])}));
    }
  }
  return out;
}

namespace {

template <typename Weight>
std::vector<MstEdge> prim(std::size_t n, Weight&& weight) {
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  edges.reserve(n - 1);

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> key(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> parent(n, kNone);
  std::vector<std::size_t> remaining(n - 1);
  std::iota(remaining.begin(), remaining.end(), std::size_t{1});

  std::size_t current = 0;
  while (!remaining.empty()) {
    std::size_t best_pos = 0;
    for (std::size_t pos = 0; pos < remaining.size(); ++pos) {
      const std::size_t j = remaining[pos];
      const double w = weight(current, j);
      if (w < key[j] || (w == key[j] && current < parent[j])) {
        key[j] = w;
        parent[j] = current;
      }
      const std::size_t b = remaining[best_pos];
      if (key[j] < key[b] || (key[j] == key[b] && j < b)) best_pos = pos;
    }
    const std::size_t next = remaining[best_pos];
    remaining[best_pos] = remaining.back();
    remaining.pop_back();
    edges.push_back({std::min(parent[next], next), std::max(parent[next], next), key[next]});
    current = next;
  }
  return edges;
}

}  // namespace

std::vector<MstEdge> minimum_spanning_tree(const DistanceMatrix& weights) {
  return prim(weights.size(), [&](std::size_t i, std::size_t j) { return weights(i, j); });
}

std::vector<MstEdge> minimum_spanning_tree(const DistanceMatrix& dm,
                                           std::span<const double> core) {
  if (core.size() != dm.size()) {
    throw std::invalid_argument("core distance count does not match matrix size");
  }
  return prim(dm.size(), [&](std::size_t i, std::size_t j) {
    return std::max({core[i], core[j], dm(i, j)});
  });
}

Dendrogram build_hierarchy(std::span<const MstEdge> mst, std::size_t num_points) {
  if (num_points >= 1 && mst.size() != num_points - 1) {
    throw std::invalid_argument(fmt::format(
        "spanning tree over {} points must have {} edges, got {}", num_points,
        num_points - 1, mst.size()));
  }
  std::vector<MstEdge> sorted(mst.begin(), mst.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const MstEdge& x, const MstEdge& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });

  // Union-find over 2n-1 nodes; each root remembers its dendrogram node.
  const std::size_t total = num_points == 0 ? 0 : 2 * num_points - 1;
  std::vector<std::size_t> uf_parent(total);
  std::iota(uf_parent.begin(), uf_parent.end(), std::size_t{0});
  std::vector<std::size_t> size(total, 1);
  auto find = [&](std::size_t x) {
    std::size_t root = x;
    while (uf_parent[root] != root) root = uf_parent[root];
    while (uf_parent[x] != root) {
      const std::size_t next = uf_parent[x];
      uf_parent[x] = root;
      x = next;
    }
    return root;
  };

  Dendrogram d;
  d.num_points = num_points;
  d.merges.reserve(sorted.size());
  std::size_t next_node = num_points;
  for (const auto& e : sorted) {
    const std::size_t ra = find(e.a);
    const std::size_t rb = find(e.b);
    if (ra == rb) throw std::invalid_argument("edge list contains a cycle");
    const std::size_t merged = next_node++;
    size[merged] = size[ra] + size[rb];
    uf_parent[ra] = merged;
    uf_parent[rb] = merged;
    d.merges.push_back({ra, rb, e.weight, size[merged]});
  }
  return d;
}

CondensedTree::CondensedTree(std::size_t num_points, std::size_t min_cluster_size,
                             std::vector<CondensedEdge> edges, std::size_t num_clusters)
    : num_points_(num_points),
      min_cluster_size_(min_cluster_size),
      edges_(std::move(edges)),
      num_clusters_(num_clusters),
      children_(num_clusters),
      parent_(num_clusters),
      birth_(num_clusters, 0.0),
      size_(num_clusters, 0) {
  if (num_clusters > 0) {
    parent_[0] = num_points;
    size_[0] = num_points;
  }
  for (const auto& e : edges_) {
    if (!is_cluster(e.child)) continue;
    const std::size_t c = e.child - num_points_;
    children_[e.parent - num_points_].push_back(e.child);
    parent_[c] = e.parent;
    birth_[c] = e.lambda;
    size_[c] = e.child_size;
  }
}

std::vector<double> CondensedTree::stabilities() const {
  std::vector<double> stability(num_clusters_, 0.0);
  for (const auto& e : edges_) {
    const std::size_t p = e.parent - num_points_;
    stability[p] += (e.lambda - birth_[p]) * static_cast<double>(e.child_size);
  }
  return stability;
}

CondensedTree condense_tree(const Dendrogram& dendrogram, std::size_t min_cluster_size) {
  if (min_cluster_size < 2) throw std::invalid_argument("min_cluster_size must be >= 2");
  const std::size_t n = dendrogram.num_points;
  if (n == 0) return CondensedTree(0, min_cluster_size, {}, 0);

  auto node_size = [&](std::size_t node) {
    return node < n ? std::size_t{1} : dendrogram.merges[node - n].size;
  };
  auto emit_points = [&](std::size_t subtree, std::size_t parent, double lambda,
                         std::vector<CondensedEdge>& out) {
    std::vector<std::size_t> stack{subtree};
    std::vector<std::size_t> leaves;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node < n) {
        leaves.push_back(node);
      } else {
        stack.push_back(dendrogram.merges[node - n].left);
        stack.push_back(dendrogram.merges[node - n].right);
      }
    }
    std::sort(leaves.begin(), leaves.end());
    for (auto p : leaves) out.push_back({parent, p, lambda, 1});
  };

  std::vector<CondensedEdge> edges;
  std::size_t next_label = n + 1;
  if (n == 1) {
    edges.push_back({n, 0, kMaxLambda, 1});
    return CondensedTree(n, min_cluster_size, std::move(edges), 1);
  }

  // Breadth-first over the dendrogram; each entry pairs a dendrogram node
  // with the condensed cluster it currently belongs to.
  std::deque<std::pair<std::size_t, std::size_t>> queue;
  queue.emplace_back(2 * n - 2, n);
  while (!queue.empty()) {
    const auto [node, label] = queue.front();
    queue.pop_front();
    const Merge& m = dendrogram.merges[node - n];
    const double lambda = lambda_from_distance(m.distance);
    const std::size_t left_size = node_size(m.left);
    const std::size_t right_size = node_size(m.right);
    const bool left_ok = left_size >= min_cluster_size;
    const bool right_ok = right_size >= min_cluster_size;

    if (left_ok && right_ok) {
      const std::size_t left_label = next_label++;
      const std::size_t right_label = next_label++;
      edges.push_back({label, left_label, lambda, left_size});
      edges.push_back({label, right_label, lambda, right_size});
      queue.emplace_back(m.left, left_label);
      queue.emplace_back(m.right, right_label);
    } else if (!left_ok && !right_ok) {
      emit_points(m.left, label, lambda, edges);
      emit_points(m.right, label, lambda, edges);
    } else {
      const std::size_t shed = left_ok ? m.right : m.left;
      const std::size_t keep = left_ok ? m.left : m.right;
      emit_points(shed, label, lambda, edges);
      // A kept side that is a single point only happens when min_cluster_size
      // is 1, which is rejected above.
      if (keep >= n) queue.emplace_back(keep, label);
    }
  }
  return CondensedTree(n, min_cluster_size, std::move(edges), next_label - n);
}

namespace {

std::vector<char> select_eom(const CondensedTree& tree, const std::vector<double>& stability) {
  const std::size_t k = tree.num_clusters();
  const std::size_t base = tree.num_points();
  std::vector<char> selected(k, 0);
  std::vector<double> best(stability);
  auto deselect_subtree = [&](std::size_t cluster) {
    std::vector<std::size_t> stack(tree.child_clusters(cluster));
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      selected[c - base] = 0;
      for (auto ch : tree.child_clusters(c)) stack.push_back(ch);
    }
  };
  // Children carry larger ids, so a descending sweep is bottom-up.
  for (std::size_t idx = k; idx-- > 1;) {
    const std::size_t c = base + idx;
    const auto& children = tree.child_clusters(c);
    if (children.empty()) {
      selected[idx] = 1;
      continue;
    }
    double subtree = 0.0;
    for (auto ch : children) subtree += best[ch - base];
    if (subtree > stability[idx]) {
      best[idx] = subtree;
    } else {
      selected[idx] = 1;
      deselect_subtree(c);
    }
  }
  return selected;
}

std::vector<char> select_leaves(const CondensedTree& tree) {
  std::vector<char> selected(tree.num_clusters(), 0);
  for (std::size_t idx = 1; idx < tree.num_clusters(); ++idx) {
    if (tree.child_clusters(tree.num_points() + idx).empty()) selected[idx] = 1;
  }
  return selected;
}

}  // namespace

HdbscanLabels select_clusters(const CondensedTree& tree, SelectionMethod method) {
  const std::size_t n = tree.num_points();
  const std::size_t k = tree.num_clusters();
  const std::size_t base = n;
  HdbscanLabels out;
  out.labels.assign(n, kNoiseLabel);
  out.probabilities.assign(n, 0.0);
  if (k == 0) return out;

  std::vector<char> selected;
  if (tree.child_clusters(tree.root()).empty()) {
    // Only the root exists: it is the single flat cluster when large enough.
    selected.assign(k, 0);
    selected[0] = n >= tree.min_cluster_size() ? 1 : 0;
  } else if (method == SelectionMethod::kExcessOfMass) {
    selected = select_eom(tree, tree.stabilities());
  } else {
    selected = select_leaves(tree);
  }

  // Nearest selected ancestor (or self) of every cluster node.
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> owner(k, kNone);
  for (std::size_t idx = 0; idx < k; ++idx) {
    if (selected[idx]) {
      owner[idx] = idx;
    } else if (idx > 0) {
      owner[idx] = owner[tree.parent_cluster(base + idx) - base];
    }
  }

  std::vector<ClusterId> flat(k, kNoiseLabel);
  for (std::size_t idx = 0; idx < k; ++idx) {
    if (selected[idx]) {
      flat[idx] = static_cast<ClusterId>(out.selected.size());
      out.selected.push_back(base + idx);
    }
  }
  out.num_clusters = out.selected.size();

  std::vector<double> point_lambda(n, 0.0);
  std::vector<double> max_lambda(k, 0.0);
  for (const auto& e : tree.edges()) {
    if (tree.is_cluster(e.child)) continue;
    const std::size_t o = owner[e.parent - base];
    if (o == kNone) continue;
    out.labels[e.child] = flat[o];
    point_lambda[e.child] = e.lambda;
    max_lambda[o] = std::max(max_lambda[o], e.lambda);
  }
  for (const auto& e : tree.edges()) {
    if (tree.is_cluster(e.child)) continue;
    const std::size_t o = owner[e.parent - base];
    if (o == kNone) continue;
    const double top = max_lambda[o];
    out.probabilities[e.child] = top > 0.0 ? std::min(point_lambda[e.child], top) / top : 1.0;
  }
  return out;
}

HdbscanLabels run_hdbscan(const DistanceMatrix& dm, const HdbscanParams& params) {
  const std::size_t n = dm.size();
  if (n < 2) throw std::invalid_argument("HDBSCAN needs at least 2 points");
  if (params.min_cluster_size < 2) throw std::invalid_argument("min_cluster_size must be >= 2");
  const std::size_t min_samples = std::clamp<std::size_t>(params.min_samples, 1, n - 1);
  const auto core = core_distances(dm, min_samples, params.threads);
  const auto mst = minimum_spanning_tree(dm, core);
  const auto dendrogram = build_hierarchy(mst, n);
  const auto tree = condense_tree(dendrogram, params.min_cluster_size);
  return select_clusters(tree, params.method);
}

}  // namespace spkclust
