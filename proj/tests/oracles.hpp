#pragma once

// Independent reference computations for tests: element-level receptive fields, element-level
// transfer counting, and random valid plans.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "edgeplan/errors.hpp"
#include "edgeplan/geometry.hpp"
#include "edgeplan/random_instances.hpp"

namespace oracle {

using namespace edgeplan;

// Dense 0/1 mask over an h x w x c tensor.
struct Mask {
  std::int64_t h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> bits;

  Mask(std::int64_t h_, std::int64_t w_, std::int64_t c_)
      : h(h_), w(w_), c(c_), bits(static_cast<std::size_t>(h_ * w_ * c_), 0) {}
  std::uint8_t& at(std::int64_t r, std::int64_t col, std::int64_t ch) {
    return bits[static_cast<std::size_t>((r * w + col) * c + ch)];
  }
  std::uint8_t at(std::int64_t r, std::int64_t col, std::int64_t ch) const {
    return bits[static_cast<std::size_t>((r * w + col) * c + ch)];
  }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
};

inline Mask box_mask(std::int64_t h, std::int64_t w, std::int64_t c, const Region& box) {
  Mask m(h, w, c);
  for (auto r = box.row_lo; r <= box.row_hi; ++r)
    for (auto col = box.col_lo; col <= box.col_hi; ++col)
      for (auto ch = box.ch_lo; ch <= box.ch_hi; ++ch) m.at(r, col, ch) = 1;
  return m;
}

// Marks every input element that any marked output element of `layer` reads.
inline Mask receptive_field(const LayerSpec& l, const Mask& out) {
  Mask in(l.in_h, l.in_w, l.in_c);
  for (std::int64_t r = 0; r < out.h; ++r) {
    for (std::int64_t col = 0; col < out.w; ++col) {
      for (std::int64_t ch = 0; ch < out.c; ++ch) {
        if (!out.at(r, col, ch)) continue;
        for (std::int64_t dr = 0; dr < l.kernel; ++dr) {
          const std::int64_t ir = r * l.stride - l.padding + dr;
          if (ir < 0 || ir >= l.in_h) continue;
          for (std::int64_t dc = 0; dc < l.kernel; ++dc) {
            const std::int64_t ic = col * l.stride - l.padding + dc;
            if (ic < 0 || ic >= l.in_w) continue;
            if (preserves_channels(l.kind)) {
              in.at(ir, ic, ch) = 1;
            } else {
              for (std::int64_t ich = 0; ich < l.in_c; ++ich) in.at(ir, ic, ich) = 1;
            }
          }
        }
      }
    }
  }
  return in;
}

inline std::optional<Region> bounding_box(const Mask& m) {
  std::optional<Region> box;
  for (std::int64_t r = 0; r < m.h; ++r) {
    for (std::int64_t col = 0; col < m.w; ++col) {
      for (std::int64_t ch = 0; ch < m.c; ++ch) {
        if (!m.at(r, col, ch)) continue;
        if (!box) {
          box = Region{r, r, col, col, ch, ch};
          continue;
        }
        box->row_lo = std::min(box->row_lo, r);
        box->row_hi = std::max(box->row_hi, r);
        box->col_lo = std::min(box->col_lo, col);
        box->col_hi = std::max(box->col_hi, col);
        box->ch_lo = std::min(box->ch_lo, ch);
        box->ch_hi = std::max(box->ch_hi, ch);
      }
    }
  }
  return box;
}

// Per node: bounding box of the exact receptive field of each owned output box of the last
// layer, traced element by element back to the first layer's input. Empty fields are dropped.
inline std::vector<BoxSet> entry_regions(std::span<const LayerSpec> chain, Scheme scheme, int n) {
  const LayerSpec& last = chain.back();
  const TileMap tiles = assign_tiles(last, scheme, n);
  std::vector<BoxSet> out(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) {
    for (const Region& owned : tiles.tiles[u]) {
      Mask m = box_mask(last.out_h, last.out_w, last.out_c, owned);
      for (auto k = static_cast<std::ptrdiff_t>(chain.size()) - 1; k >= 0; --k) {
        m = receptive_field(chain[static_cast<std::size_t>(k)], m);
      }
      if (auto box = bounding_box(m)) out[u].push_back(*box);
    }
  }
  return out;
}

// Bytes from u to v counted element by element over the producer's output tensor.
inline ByteMatrix count_transfers(const LayerSpec& producer, const TileMap& tiles,
                                  std::span<const BoxSet> needs, std::int64_t element_size) {
  const int n = tiles.node_count;
  ByteMatrix v = ByteMatrix::Zero(n, n);
  for (std::int64_t r = 0; r < producer.out_h; ++r) {
    for (std::int64_t col = 0; col < producer.out_w; ++col) {
      for (std::int64_t ch = 0; ch < producer.out_c; ++ch) {
        const Region e{r, r, col, col, ch, ch};
        int owner = -1;
        for (int u = 0; u < n && owner < 0; ++u) {
          for (const Region& b : tiles.tiles[u]) {
            if (b.contains(e)) owner = u;
          }
        }
        for (int dst = 0; dst < n; ++dst) {
          if (dst == owner) continue;
          for (const Region& b : needs[dst]) {
            if (b.contains(e)) {
              v(owner, dst) += element_size;
              break;
            }
          }
        }
      }
    }
  }
  return v;
}

// A random valid plan drawn back to front: each layer picks a tileable scheme, and NT is drawn
// only where the next layer continues the same spatial scheme.
inline Plan random_plan(Rng& rng, const ModelGraph& g, int n) {
  const int layers = static_cast<int>(g.size());
  Plan plan(static_cast<std::size_t>(layers));
  for (int i = layers - 1; i >= 0; --i) {
    const LayerSpec& l = g.layers[static_cast<std::size_t>(i)];
    std::vector<PlanEntry> options;
    for (Scheme s : kAllSchemes) {
      if (!can_tile(l, s, n)) continue;
      options.push_back({s, Mode::kT});
      const bool chain_ok = i + 1 < layers && is_spatial(s) &&
                            plan[static_cast<std::size_t>(i + 1)].scheme == s;
      if (chain_ok) options.push_back({s, Mode::kNT});
    }
    if (options.empty()) throw ValidationError("layer cannot be tiled");
    plan[static_cast<std::size_t>(i)] =
        options[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(options.size()) - 1))];
  }
  return plan;
}

struct SuiteResult {
  int cases = 0;
  int failures = 0;
};

struct Window {
  std::int64_t kernel, stride, padding;
};

inline std::vector<Window> all_windows() {
  std::vector<Window> w;
  for (std::int64_t k : {1, 3, 5})
    for (std::int64_t s : {1, 2})
      for (std::int64_t p : {0, 1, 2}) w.push_back({k, s, p});
  return w;
}

// Builds a chain over an h x w x c input; nullopt when some layer would have an empty output.
inline std::optional<std::vector<LayerSpec>> build_chain(std::int64_t h, std::int64_t w, std::int64_t c,
                                                         std::span<const Window> windows,
                                                         std::uint64_t variant) {
  constexpr LayerKind kAny[] = {LayerKind::kStandardConv, LayerKind::kDepthwiseConv,
                                LayerKind::kPool, LayerKind::kPointwiseConv, LayerKind::kMatmul};
  std::vector<LayerSpec> chain;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Window& win = windows[i];
    const bool unit = win.kernel == 1 && win.padding == 0;
    LayerSpec l;
    l.id = static_cast<int>(i);
    l.kind = kAny[(variant + i) % (unit ? 5 : 3)];
    if (l.kind == LayerKind::kMatmul && win.stride != 1) l.kind = LayerKind::kPointwiseConv;
    l.in_h = h;
    l.in_w = w;
    l.in_c = c;
    l.kernel = win.kernel;
    l.stride = win.stride;
    l.padding = win.padding;
    l.out_h = conv_out_extent(h, win.kernel, win.stride, win.padding);
    l.out_w = conv_out_extent(w, win.kernel, win.stride, win.padding);
    l.out_c = preserves_channels(l.kind) ? c : 1 + static_cast<std::int64_t>((variant + 3 * i) % 8);
    if (l.out_h < 1 || l.out_w < 1) return std::nullopt;
    chain.push_back(l);
    h = l.out_h;
    w = l.out_w;
    c = l.out_c;
  }
  return chain;
}

inline void check_chain(std::span<const LayerSpec> chain, int n, SuiteResult& result) {
  for (Scheme s : {Scheme::kInH, Scheme::kInW, Scheme::kGrid2D}) {
    if (!can_tile(chain.back(), s, n)) continue;
    ++result.cases;
    if (chain_entry_regions(chain, s, n) != entry_regions(chain, s, n)) ++result.failures;
  }
}

// chain_entry_regions against element-level receptive fields on maps up to 16x16x8. Chains of
// one and two layers cover every window combination; longer chains cover every uniform window
// plus `random_chains` mixed draws.
inline SuiteResult entry_region_suite(int random_chains, std::uint64_t seed) {
  struct Map {
    std::int64_t h, w, c;
  };
  constexpr Map kMaps[] = {{16, 16, 8}, {13, 11, 5}, {9, 7, 3}, {6, 6, 1}};
  const std::vector<Window> windows = all_windows();
  SuiteResult result;
  std::uint64_t variant = 0;
  const auto run = [&](std::span<const Window> ws, const Map& m, int n) {
    if (auto chain = build_chain(m.h, m.w, m.c, ws, variant++)) check_chain(*chain, n, result);
  };
  for (const Window& a : windows) {
    for (const Map& m : kMaps) {
      for (int n : {2, 3, 4}) run(std::span(&a, 1), m, n);
    }
  }
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (std::size_t j = 0; j < windows.size(); ++j) {
      const Window pair[] = {windows[i], windows[j]};
      const std::size_t idx = i * windows.size() + j;
      run(pair, kMaps[idx % 4], 2 + static_cast<int>(idx % 3));
    }
  }
  for (int len : {3, 4}) {
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const std::vector<Window> same(static_cast<std::size_t>(len), windows[i]);
      run(same, kMaps[i % 4], 2 + static_cast<int>(i % 3));
    }
  }
  Rng rng(seed);
  for (int t = 0; t < random_chains; ++t) {
    const int len = static_cast<int>(uniform_int(rng, 3, 4));
    std::vector<Window> ws;
    for (int k = 0; k < len; ++k) ws.push_back(pick<Window>(rng, windows));
    const Map m{uniform_int(rng, 4, 16), uniform_int(rng, 4, 16), uniform_int(rng, 1, 8)};
    run(ws, m, static_cast<int>(uniform_int(rng, 2, 4)));
  }
  return result;
}

// Every window tuple of length `len` on one h x w x c map; node counts rotate through 2..4.
inline SuiteResult exhaustive_chain_suite(int len, std::int64_t h, std::int64_t w, std::int64_t c) {
  const std::vector<Window> windows = all_windows();
  SuiteResult result;
  std::vector<std::size_t> idx(static_cast<std::size_t>(len), 0);
  std::uint64_t variant = 0;
  for (;;) {
    std::vector<Window> ws;
    for (std::size_t i : idx) ws.push_back(windows[i]);
    if (auto chain = build_chain(h, w, c, ws, variant)) {
      check_chain(*chain, 2 + static_cast<int>(variant % 3), result);
    }
    ++variant;
    std::size_t k = 0;
    while (k < idx.size() && ++idx[k] == windows.size()) idx[k++] = 0;
    if (k == idx.size()) break;
  }
  return result;
}

// Coverage and disjointness of assign_tiles on random (layer, scheme, node_count) draws.
inline SuiteResult tile_suite(int draws, std::uint64_t seed) {
  Rng rng(seed);
  SuiteResult result;
  LayerRanges ranges;
  ranges.channels = {1, 2, 3, 5, 8, 16, 31, 64};
  while (result.cases < draws) {
    const LayerSpec l = random_layer(rng, 0, uniform_int(rng, 1, 40), uniform_int(rng, 1, 40),
                                     pick<std::int64_t>(rng, ranges.channels), ranges);
    const Scheme s = kAllSchemes[static_cast<std::size_t>(uniform_int(rng, 0, kSchemeCount - 1))];
    const int n = static_cast<int>(uniform_int(rng, 2, 8));
    if (!can_tile(l, s, n)) continue;
    ++result.cases;
    const TileMap tiles = assign_tiles(l, s, n);
    const Region full = full_output_region(l);
    std::vector<Region> all;
    std::int64_t summed = 0;
    bool inside = static_cast<int>(tiles.tiles.size()) == n;
    for (const BoxSet& boxes : tiles.tiles) {
      inside = inside && !boxes.empty();
      for (const Region& b : boxes) {
        inside = inside && full.contains(b);
        summed += b.elements();
        all.push_back(b);
      }
    }
    const std::int64_t total = l.out_elements();
    if (!inside || summed != total || union_elements(all) != total) ++result.failures;
  }
  return result;
}

}  // namespace oracle
