#include "edgeplan/geometry.hpp"

#include <algorithm>
#include <string>

#include "edgeplan/errors.hpp"

namespace edgeplan {

namespace {

constexpr std::array<std::string_view, kSchemeCount> kSchemeNames = {"inh", "inw", "outc",
                                                                     "grid2d"};

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

// Input index range read by output indices [lo, hi] along one spatial axis. Output index r
// reads r*stride - padding + t for t in [0, kernel), restricted to [0, in).
std::optional<std::pair<std::int64_t, std::int64_t>> map_axis(std::int64_t lo, std::int64_t hi,
                                                              const LayerSpec& l,
                                                              std::int64_t in) {
  const std::int64_t first_valid = std::max(lo, ceil_div(l.padding - l.kernel + 1, l.stride));
  const std::int64_t last_valid = std::min(hi, floor_div(in - 1 + l.padding, l.stride));
  if (first_valid > last_valid) return std::nullopt;
  return std::pair{std::max<std::int64_t>(0, first_valid * l.stride - l.padding),
                   std::min(in - 1, last_valid * l.stride - l.padding + l.kernel - 1)};
}

using Interval = std::pair<std::int64_t, std::int64_t>;

// Exact set of input indices read along one axis by a set of output indices, as sorted
// disjoint intervals. Windows leave gaps only when stride exceeds kernel.
std::vector<Interval> map_axis_set(const std::vector<Interval>& out, const LayerSpec& l,
                                   std::int64_t in) {
  std::vector<Interval> mapped;
  for (const auto& [lo, hi] : out) {
    if (l.kernel >= l.stride) {
      if (auto r = map_axis(lo, hi, l, in)) mapped.push_back(*r);
      continue;
    }
    for (std::int64_t i = lo; i <= hi; ++i) {
      if (auto r = map_axis(i, i, l, in)) mapped.push_back(*r);
    }
  }
  std::sort(mapped.begin(), mapped.end());
  std::vector<Interval> merged;
  for (const Interval& r : mapped) {
    if (!merged.empty() && r.first <= merged.back().second + 1) {
      merged.back().second = std::max(merged.back().second, r.second);
    } else {
      merged.push_back(r);
    }
  }
  return merged;
}

// Exact elements a node needs along a chain, kept per axis: a box's receptive field is the
// product of its per-axis fields.
struct Field {
  std::vector<Interval> rows, cols;
  std::int64_t ch_lo = 0, ch_hi = 0;

  explicit Field(const Region& r)
      : rows{{r.row_lo, r.row_hi}}, cols{{r.col_lo, r.col_hi}}, ch_lo(r.ch_lo), ch_hi(r.ch_hi) {}

  bool empty() const { return rows.empty() || cols.empty(); }
  Region bounds() const {
    return {rows.front().first, rows.back().second, cols.front().first, cols.back().second,
            ch_lo, ch_hi};
  }
  void step_back(const LayerSpec& l) {
    rows = map_axis_set(rows, l, l.in_h);
    cols = map_axis_set(cols, l, l.in_w);
    if (!preserves_channels(l.kind)) {
      ch_lo = 0;
      ch_hi = l.in_c - 1;
    }
  }
};

void require_node_count(int node_count) {
  if (node_count < 2) throw ValidationError("node_count must be >= 2");
}

}  // namespace

std::string_view to_string(Scheme scheme) { return kSchemeNames.at(ordinal(scheme)); }
std::string_view to_string(Mode mode) { return mode == Mode::kT ? "t" : "nt"; }

Scheme scheme_from_string(std::string_view name) {
  for (Scheme s : kAllSchemes) {
    if (to_string(s) == name) return s;
  }
  throw ParseError("unknown scheme '" + std::string(name) + "'");
}

Mode mode_from_string(std::string_view name) {
  if (name == "t") return Mode::kT;
  if (name == "nt") return Mode::kNT;
  throw ParseError("unknown mode '" + std::string(name) + "'");
}

std::optional<Region> intersect(const Region& a, const Region& b) {
  Region r{std::max(a.row_lo, b.row_lo), std::min(a.row_hi, b.row_hi),
           std::max(a.col_lo, b.col_lo), std::min(a.col_hi, b.col_hi),
           std::max(a.ch_lo, b.ch_lo),   std::min(a.ch_hi, b.ch_hi)};
  if (r.row_lo > r.row_hi || r.col_lo > r.col_hi || r.ch_lo > r.ch_hi) return std::nullopt;
  return r;
}

std::int64_t union_elements(std::span<const Region> boxes) {
  if (boxes.empty()) return 0;
  if (boxes.size() == 1) return boxes.front().elements();
  // Coordinate compression: every compressed cell is either fully inside a box or outside it.
  std::vector<std::int64_t> rows, cols, chs;
  for (const Region& b : boxes) {
    rows.insert(rows.end(), {b.row_lo, b.row_hi + 1});
    cols.insert(cols.end(), {b.col_lo, b.col_hi + 1});
    chs.insert(chs.end(), {b.ch_lo, b.ch_hi + 1});
  }
  for (auto* axis : {&rows, &cols, &chs}) {
    std::sort(axis->begin(), axis->end());
    axis->erase(std::unique(axis->begin(), axis->end()), axis->end());
  }
  std::int64_t total = 0;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < cols.size(); ++j) {
      for (std::size_t k = 0; k + 1 < chs.size(); ++k) {
        const bool covered = std::any_of(boxes.begin(), boxes.end(), [&](const Region& b) {
          return b.row_lo <= rows[i] && rows[i] <= b.row_hi && b.col_lo <= cols[j] &&
                 cols[j] <= b.col_hi && b.ch_lo <= chs[k] && chs[k] <= b.ch_hi;
        });
        if (covered) total += (rows[i + 1] - rows[i]) * (cols[j + 1] - cols[j]) * (chs[k + 1] - chs[k]);
      }
    }
  }
  return total;
}

Region full_output_region(const LayerSpec& l) {
  return {0, l.out_h - 1, 0, l.out_w - 1, 0, l.out_c - 1};
}

Region full_input_region(const LayerSpec& l) {
  return {0, l.in_h - 1, 0, l.in_w - 1, 0, l.in_c - 1};
}

std::vector<std::pair<std::int64_t, std::int64_t>> balanced_split(std::int64_t extent, int parts) {
  std::vector<std::pair<std::int64_t, std::int64_t>> chunks;
  chunks.reserve(parts);
  const std::int64_t base = extent / parts;
  const std::int64_t extra = extent % parts;
  std::int64_t lo = 0;
  for (int i = 0; i < parts; ++i) {
    const std::int64_t len = base + (i < extra ? 1 : 0);
    chunks.emplace_back(lo, lo + len - 1);
    lo += len;
  }
  return chunks;
}

int grid_side(int node_count) {
  int g = 1;
  while (g * g < node_count) ++g;
  return g;
}

bool can_tile(const LayerSpec& l, Scheme scheme, int node_count) {
  if (node_count < 2) return false;
  switch (scheme) {
    case Scheme::kInH: return l.out_h >= node_count;
    case Scheme::kInW: return l.out_w >= node_count;
    case Scheme::kOutC: return l.out_c >= node_count;
    case Scheme::kGrid2D: {
      const int g = grid_side(node_count);
      return l.out_h >= g && l.out_w >= g;
    }
  }
  return false;
}

TileMap assign_tiles(const LayerSpec& l, Scheme scheme, int node_count) {
  require_node_count(node_count);
  if (!can_tile(l, scheme, node_count)) {
    throw ValidationError("layer " + std::to_string(l.id) + ": " + std::string(to_string(scheme)) +
                          " dimension is smaller than the partition count");
  }
  TileMap map;
  map.node_count = node_count;
  map.tiles.resize(node_count);
  const Region full = full_output_region(l);
  switch (scheme) {
    case Scheme::kInH: {
      const auto chunks = balanced_split(l.out_h, node_count);
      for (int u = 0; u < node_count; ++u) {
        Region r = full;
        std::tie(r.row_lo, r.row_hi) = chunks[u];
        map.tiles[u].push_back(r);
      }
      break;
    }
    case Scheme::kInW: {
      const auto chunks = balanced_split(l.out_w, node_count);
      for (int u = 0; u < node_count; ++u) {
        Region r = full;
        std::tie(r.col_lo, r.col_hi) = chunks[u];
        map.tiles[u].push_back(r);
      }
      break;
    }
    case Scheme::kOutC: {
      const auto chunks = balanced_split(l.out_c, node_count);
      for (int u = 0; u < node_count; ++u) {
        Region r = full;
        std::tie(r.ch_lo, r.ch_hi) = chunks[u];
        map.tiles[u].push_back(r);
      }
      break;
    }
    case Scheme::kGrid2D: {
      const int g = grid_side(node_count);
      const auto row_chunks = balanced_split(l.out_h, g);
      const auto col_chunks = balanced_split(l.out_w, g);
      for (int cell = 0; cell < g * g; ++cell) {
        Region r = full;
        std::tie(r.row_lo, r.row_hi) = row_chunks[cell / g];
        std::tie(r.col_lo, r.col_hi) = col_chunks[cell % g];
        map.tiles[cell % node_count].push_back(r);
      }
      break;
    }
  }
  return map;
}

std::optional<Region> input_region(const LayerSpec& l, const Region& out) {
  const auto rows = map_axis(out.row_lo, out.row_hi, l, l.in_h);
  const auto cols = map_axis(out.col_lo, out.col_hi, l, l.in_w);
  if (!rows || !cols) return std::nullopt;
  Region in{rows->first, rows->second, cols->first, cols->second, 0, l.in_c - 1};
  if (preserves_channels(l.kind)) {
    in.ch_lo = out.ch_lo;
    in.ch_hi = out.ch_hi;
  }
  return in;
}

BoxSet input_regions(const LayerSpec& layer, const BoxSet& out) {
  BoxSet in;
  in.reserve(out.size());
  for (const Region& r : out) {
    if (auto mapped = input_region(layer, r)) in.push_back(*mapped);
  }
  return in;
}

ChainGeometry chain_geometry(std::span<const LayerSpec> layers, int first, int last,
                             Scheme scheme, int node_count) {
  if (first < 0 || last < first || last >= static_cast<int>(layers.size())) {
    throw ValidationError("chain bounds out of range");
  }
  if (!is_spatial(scheme) && last > first) {
    throw ValidationError("an NT chain cannot use the outc scheme");
  }
  ChainGeometry geo;
  geo.first = first;
  geo.last = last;
  geo.scheme = scheme;
  geo.node_count = node_count;
  geo.computed.resize(last - first + 1);
  const TileMap owned = assign_tiles(layers[last], scheme, node_count);
  for (auto& level : geo.computed) level.resize(node_count);
  geo.computed.back() = owned.tiles;
  geo.entry.resize(node_count);
  for (int u = 0; u < node_count; ++u) {
    for (const Region& tile : owned.tiles[u]) {
      Field field(tile);
      for (int k = last; k >= first; --k) {
        field.step_back(layers[k]);
        if (field.empty()) break;
        if (k > first) {
          geo.computed[k - 1 - first][u].push_back(field.bounds());
        } else {
          geo.entry[u].push_back(field.bounds());
        }
      }
    }
  }
  return geo;
}

std::vector<BoxSet> chain_entry_regions(std::span<const LayerSpec> chain, Scheme scheme,
                                        int node_count) {
  if (chain.empty()) throw ValidationError("empty chain");
  return chain_geometry(chain, 0, static_cast<int>(chain.size()) - 1, scheme, node_count).entry;
}

std::int64_t node_workload(const LayerSpec& layer, const Region& out_region) {
  return flops_per_output_element(layer) * out_region.elements();
}

std::int64_t node_workload(const LayerSpec& layer, const BoxSet& out_regions) {
  return flops_per_output_element(layer) * union_elements(out_regions);
}

ByteMatrix transfer_volumes(const TileMap& producer, std::span<const BoxSet> consumer_needs,
                            std::int64_t element_size) {
  const int n = producer.node_count;
  if (static_cast<int>(consumer_needs.size()) != n) {
    throw ValidationError("consumer regions do not match the producer node count");
  }
  ByteMatrix volumes = ByteMatrix::Zero(n, n);
  std::vector<Region> overlap;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v) continue;
      std::int64_t elements = 0;
      // Owned boxes of one node are disjoint, so their contributions add.
      for (const Region& owned : producer.tiles[u]) {
        overlap.clear();
        for (const Region& need : consumer_needs[v]) {
          if (auto both = intersect(owned, need)) overlap.push_back(*both);
        }
        elements += union_elements(overlap);
      }
      volumes(u, v) = elements * element_size;
    }
  }
  return volumes;
}

bool feasible(Scheme scheme, Mode mode, const LayerSpec& /*layer*/, const LayerSpec* next_layer,
              std::optional<Scheme> next_scheme) {
  if (mode == Mode::kT) return true;
  return is_spatial(scheme) && next_layer != nullptr && next_scheme.has_value() &&
         *next_scheme == scheme;
}

void validate_plan(const ModelGraph& graph, const Plan& plan, int node_count) {
  if (plan.size() != graph.size()) {
    throw ValidationError("plan has " + std::to_string(plan.size()) + " entries for " +
                          std::to_string(graph.size()) + " layers");
  }
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const bool last = i + 1 == plan.size();
    const LayerSpec* next = last ? nullptr : &graph.layers[i + 1];
    const std::optional<Scheme> next_scheme =
        last ? std::nullopt : std::optional<Scheme>(plan[i + 1].scheme);
    const std::string at = "plan entry " + std::to_string(i) + ": ";
    if (!can_tile(graph.layers[i], plan[i].scheme, node_count)) {
      throw ValidationError(at + std::string(to_string(plan[i].scheme)) +
                            " cannot tile this layer across " + std::to_string(node_count) +
                            " nodes");
    }
    if (!feasible(plan[i].scheme, plan[i].mode, graph.layers[i], next, next_scheme)) {
      throw ValidationError(at + "mode nt is infeasible here");
    }
  }
}

bool tiles_nest(const LayerSpec& lower, const LayerSpec& upper, Scheme scheme, int node_count) {
  if (!can_tile(lower, scheme, node_count) || !can_tile(upper, scheme, node_count)) return false;
  // With stride above kernel the read set has gaps, so its bounding box overstates it.
  if (upper.stride > upper.kernel) return false;
  const TileMap low = assign_tiles(lower, scheme, node_count);
  const TileMap up = assign_tiles(upper, scheme, node_count);
  for (int u = 0; u < node_count; ++u) {
    for (std::size_t c = 0; c < up.tiles[u].size(); ++c) {
      const auto need = input_region(upper, up.tiles[u][c]);
      if (!need || !need->contains(low.tiles[u][c])) return false;
    }
  }
  return true;
}

}  // namespace edgeplan
