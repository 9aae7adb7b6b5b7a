#pragma once

#include <array>
#include <deque>
#include <vector>

#include "pmapcut/raster.hpp"

namespace pmapcut {

/// Boykov-Kolmogorov augmenting-path max-flow on an explicit graph.
///
/// Terminal capacities follow the usual vision convention: a node left on the
/// source side after the cut pays its sink capacity, a node on the sink side
/// pays its source capacity. After solve(), source_side() reports the minimal
/// source set (nodes reachable from the source in the residual graph), so
/// labels are tied toward the sink side.
class MaxFlow {
public:
    explicit MaxFlow(int num_nodes, std::size_t expected_edges = 0);

    int num_nodes() const { return static_cast<int>(nodes_.size()); }

    /// Adds capacities source->i and i->sink. May be called repeatedly.
    void add_terminal(int i, double source_cap, double sink_cap);

    /// Adds the arc pair i->j (cap) and j->i (rev_cap).
    void add_edge(int i, int j, double cap, double rev_cap);

    double solve();
    bool source_side(int i) const { return source_set_[static_cast<std::size_t>(i)]; }
    double flow() const { return flow_; }

private:
    static constexpr int kFree = -1;
    static constexpr int kTerminal = -2;
    static constexpr int kOrphan = -3;

    struct Arc {
        int head;
        int next;
        double r_cap;
    };

    struct Node {
        int first = -1;
        int parent = kFree;
        long long ts = 0;
        int dist = 0;
        bool sink = false;
        bool queued = false;
        double tr_cap = 0.0;
    };

    int head(int a) const { return arcs_[static_cast<std::size_t>(a)].head; }
    double& rcap(int a) { return arcs_[static_cast<std::size_t>(a)].r_cap; }
    Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }

    void activate(int i);
    int next_active();
    void set_orphan_front(int i);
    void set_orphan_rear(int i);
    void augment(int middle);
    void process_source_orphan(int i);
    void process_sink_orphan(int i);
    void compute_source_set();

    std::vector<Node> nodes_;
    std::vector<Arc> arcs_;
    std::deque<int> active_;
    std::deque<int> orphans_;
    std::vector<bool> source_set_;
    long long time_ = 0;
    double flow_ = 0.0;
};

/// Neighbor offsets of the four "forward" 8-connectivity directions; every
/// undirected grid edge is stored once, at its first endpoint.
inline constexpr std::array<std::array<int, 2>, 4> kForwardNeighbors{{{1, 0}, {0, 1}, {1, 1}, {-1, 1}}};

/// Binary pairwise energy on a pixel grid with 8-connectivity.
/// edges[d](y, x) weights the edge between (x, y) and (x, y) + kForwardNeighbors[d];
/// entries whose neighbor falls outside the grid must be zero.
struct GridEnergy {
    int width = 0;
    int height = 0;
    Raster<double> unary_fg;
    Raster<double> unary_bg;
    std::array<Raster<double>, 4> edges;

    static GridEnergy zeros(int width, int height);
};

struct CutResult {
    CutoutMask mask;
    double energy = 0.0;
    double flow = 0.0;
};

/// Contrast-sensitive 8-connected smoothness: w_ij = gamma * exp(-beta |z_i - z_j|^2) / dist(i, j)
/// with beta = 1 / (2 <|z_i - z_j|^2>) averaged over all grid edges (beta = 0 on a constant image).
GridEnergy build_grid_energy(const RgbImage& image, const Raster<double>& unary_fg, const Raster<double>& unary_bg,
                             double gamma);

/// Throws NegativeUnary / InvalidArgument / DimensionMismatch on a malformed energy.
void validate(const GridEnergy& energy);

/// Global minimizer of the energy; ties resolve toward background.
CutResult min_cut(const GridEnergy& energy);

double labeling_energy(const GridEnergy& energy, const CutoutMask& mask);

} // namespace pmapcut
