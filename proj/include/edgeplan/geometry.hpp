#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "edgeplan/model_graph.hpp"

namespace edgeplan {

/// Partitioning rule for a layer's output tensor. Ordinals are stable and used for tie-breaking.
enum class Scheme : int { kInH = 0, kInW = 1, kOutC = 2, kGrid2D = 3 };

inline constexpr int kSchemeCount = 4;
inline constexpr std::array<Scheme, kSchemeCount> kAllSchemes = {Scheme::kInH, Scheme::kInW,
                                                                 Scheme::kOutC, Scheme::kGrid2D};

/// T: exchange data after the layer. NT: skip the exchange; the layer computes halo outputs.
enum class Mode : int { kT = 0, kNT = 1 };

inline constexpr bool is_spatial(Scheme s) { return s != Scheme::kOutC; }
inline constexpr int ordinal(Scheme s) { return static_cast<int>(s); }

std::string_view to_string(Scheme scheme);
std::string_view to_string(Mode mode);
Scheme scheme_from_string(std::string_view name);
Mode mode_from_string(std::string_view name);

/// Closed integer box in (row, col, channel) tensor coordinates.
struct Region {
  std::int64_t row_lo = 0, row_hi = 0;
  std::int64_t col_lo = 0, col_hi = 0;
  std::int64_t ch_lo = 0, ch_hi = 0;

  std::int64_t rows() const { return row_hi - row_lo + 1; }
  std::int64_t cols() const { return col_hi - col_lo + 1; }
  std::int64_t channels() const { return ch_hi - ch_lo + 1; }
  std::int64_t elements() const { return rows() * cols() * channels(); }
  bool contains(const Region& o) const {
    return row_lo <= o.row_lo && o.row_hi <= row_hi && col_lo <= o.col_lo && o.col_hi <= col_hi &&
           ch_lo <= o.ch_lo && o.ch_hi <= ch_hi;
  }
  bool operator==(const Region&) const = default;
};

/// A node's share of a tensor; boxes of one node may overlap each other.
using BoxSet = std::vector<Region>;

std::optional<Region> intersect(const Region& a, const Region& b);
/// Number of distinct elements covered by the boxes.
std::int64_t union_elements(std::span<const Region> boxes);

Region full_output_region(const LayerSpec& layer);
Region full_input_region(const LayerSpec& layer);

/// Per-node owned boxes over one layer's output tensor.
struct TileMap {
  int node_count = 0;
  std::vector<BoxSet> tiles;
};

/// Splits [0, extent) into `parts` contiguous chunks; the first extent % parts chunks get one more.
std::vector<std::pair<std::int64_t, std::int64_t>> balanced_split(std::int64_t extent, int parts);
/// Side of the square cell grid used by Grid2D: ceil(sqrt(node_count)).
int grid_side(int node_count);

bool can_tile(const LayerSpec& layer, Scheme scheme, int node_count);
TileMap assign_tiles(const LayerSpec& layer, Scheme scheme, int node_count);

/// Bounding box of the input elements read while computing `out`. Empty when every window
/// in `out` lies entirely inside the zero padding.
std::optional<Region> input_region(const LayerSpec& layer, const Region& out);
BoxSet input_regions(const LayerSpec& layer, const BoxSet& out);

/// Regions computed by each node when layers [first, last] run as one NT...NT,T chain. Each box
/// bounds the exact elements that one owned tile depends on at that depth.
struct ChainGeometry {
  int first = 0;
  int last = 0;
  Scheme scheme = Scheme::kInH;
  int node_count = 0;
  // computed[k - first][node]: output boxes of layer k computed by that node, halo included.
  std::vector<std::vector<BoxSet>> computed;
  // entry[node]: boxes of layer `first`'s input the node must hold before the chain starts.
  std::vector<BoxSet> entry;
};

ChainGeometry chain_geometry(std::span<const LayerSpec> layers, int first, int last,
                             Scheme scheme, int node_count);

/// Per-node input boxes needed before `chain.front()` so that no exchange happens until after
/// `chain.back()`. Rejects OutC chains longer than one layer.
std::vector<BoxSet> chain_entry_regions(std::span<const LayerSpec> chain, Scheme scheme,
                                        int node_count);

std::int64_t node_workload(const LayerSpec& layer, const Region& out_region);
std::int64_t node_workload(const LayerSpec& layer, const BoxSet& out_regions);

template <typename Scalar>
using SquareMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using ByteMatrix = SquareMatrix<std::int64_t>;

/// Bytes node u must send node v: |owned(u) ∩ needed(v)| * element_size; zero diagonal.
ByteMatrix transfer_volumes(const TileMap& producer, std::span<const BoxSet> consumer_needs,
                            std::int64_t element_size);

bool feasible(Scheme scheme, Mode mode, const LayerSpec& layer, const LayerSpec* next_layer,
              std::optional<Scheme> next_scheme);

struct PlanEntry {
  Scheme scheme = Scheme::kInH;
  Mode mode = Mode::kT;
  bool operator==(const PlanEntry&) const = default;
};
using Plan = std::vector<PlanEntry>;

/// Throws ValidationError naming the first offending layer.
void validate_plan(const ModelGraph& graph, const Plan& plan, int node_count);

/// True when, for every node and cell, the inputs that `upper`'s tile reads form a box
/// containing the same node's tile of `lower` (the layer feeding `upper`). Extending an NT
/// chain across such a boundary can only grow every node's computed regions.
bool tiles_nest(const LayerSpec& lower, const LayerSpec& upper, Scheme scheme, int node_count);

}  // namespace edgeplan
