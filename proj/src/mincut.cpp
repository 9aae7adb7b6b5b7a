#include "pmapcut/mincut.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmapcut/error.hpp"

namespace pmapcut {

MaxFlow::MaxFlow(int num_nodes, std::size_t expected_edges) : nodes_(static_cast<std::size_t>(num_nodes))
{
    arcs_.reserve(expected_edges * 2);
}

void MaxFlow::add_terminal(int i, double source_cap, double sink_cap)
{
    Node& n = node(i);
    const double delta = n.tr_cap;
    if (delta > 0)
        source_cap += delta;
    else
        sink_cap -= delta;
    flow_ += std::min(source_cap, sink_cap);
    n.tr_cap = source_cap - sink_cap;
}

void MaxFlow::add_edge(int i, int j, double cap, double rev_cap)
{
    const int a = static_cast<int>(arcs_.size());
    arcs_.push_back({j, node(i).first, cap});
    arcs_.push_back({i, node(j).first, rev_cap});
    node(i).first = a;
    node(j).first = a + 1;
}

void MaxFlow::activate(int i)
{
    Node& n = node(i);
    if (!n.queued) {
        n.queued = true;
        active_.push_back(i);
    }
}

int MaxFlow::next_active()
{
    while (!active_.empty()) {
        const int i = active_.front();
        active_.pop_front();
        node(i).queued = false;
        if (node(i).parent != kFree)
            return i;
    }
    return -1;
}

void MaxFlow::set_orphan_front(int i)
{
    node(i).parent = kOrphan;
    orphans_.push_front(i);
}

void MaxFlow::set_orphan_rear(int i)
{
    node(i).parent = kOrphan;
    orphans_.push_back(i);
}

void MaxFlow::augment(int middle)
{
    // Bottleneck along source tree, middle arc, sink tree.
    double bottleneck = rcap(middle);
    int i = head(middle ^ 1);
    for (int a = node(i).parent; a != kTerminal; a = node(i).parent) {
        bottleneck = std::min(bottleneck, rcap(a ^ 1));
        i = head(a);
    }
    bottleneck = std::min(bottleneck, node(i).tr_cap);
    i = head(middle);
    for (int a = node(i).parent; a != kTerminal; a = node(i).parent) {
        bottleneck = std::min(bottleneck, rcap(a));
        i = head(a);
    }
    bottleneck = std::min(bottleneck, -node(i).tr_cap);

    rcap(middle ^ 1) += bottleneck;
    rcap(middle) -= bottleneck;
    i = head(middle ^ 1);
    for (int a = node(i).parent; a != kTerminal; a = node(i).parent) {
        rcap(a) += bottleneck;
        rcap(a ^ 1) -= bottleneck;
        const int parent = head(a);
        if (rcap(a ^ 1) == 0.0)
            set_orphan_front(i);
        i = parent;
    }
    node(i).tr_cap -= bottleneck;
    if (node(i).tr_cap == 0.0)
        set_orphan_front(i);
    i = head(middle);
    for (int a = node(i).parent; a != kTerminal; a = node(i).parent) {
        rcap(a ^ 1) += bottleneck;
        rcap(a) -= bottleneck;
        const int parent = head(a);
        if (rcap(a) == 0.0)
            set_orphan_front(i);
        i = parent;
    }
    node(i).tr_cap += bottleneck;
    if (node(i).tr_cap == 0.0)
        set_orphan_front(i);
    flow_ += bottleneck;
}

void MaxFlow::process_source_orphan(int i)
{
    constexpr int kInf = std::numeric_limits<int>::max();
    int best_arc = kFree;
    int best_dist = kInf;
    for (int a0 = node(i).first; a0 >= 0; a0 = arcs_[static_cast<std::size_t>(a0)].next) {
        if (rcap(a0 ^ 1) == 0.0)
            continue;
        const int j = head(a0);
        if (node(j).sink || node(j).parent == kFree)
            continue;
        // Walk to the root to check that j still hangs off the source.
        int d = 0;
        for (int k = j;;) {
            if (node(k).ts == time_) {
                d += node(k).dist;
                break;
            }
            const int a = node(k).parent;
            ++d;
            if (a == kTerminal) {
                node(k).ts = time_;
                node(k).dist = 1;
                break;
            }
            if (a == kOrphan) {
                d = kInf;
                break;
            }
            k = head(a);
        }
        if (d == kInf)
            continue;
        if (d < best_dist) {
            best_arc = a0;
            best_dist = d;
        }
        for (int k = j; node(k).ts != time_; k = head(node(k).parent)) {
            node(k).ts = time_;
            node(k).dist = d--;
        }
    }

    if (best_arc != kFree) {
        node(i).parent = best_arc;
        node(i).ts = time_;
        node(i).dist = best_dist + 1;
        return;
    }
    node(i).parent = kFree;
    for (int a0 = node(i).first; a0 >= 0; a0 = arcs_[static_cast<std::size_t>(a0)].next) {
        const int j = head(a0);
        const int a = node(j).parent;
        if (node(j).sink || a == kFree)
            continue;
        if (rcap(a0 ^ 1) > 0.0)
            activate(j);
        if (a != kTerminal && a != kOrphan && head(a) == i)
            set_orphan_rear(j);
    }
}

void MaxFlow::process_sink_orphan(int i)
{
    constexpr int kInf = std::numeric_limits<int>::max();
    int best_arc = kFree;
    int best_dist = kInf;
    for (int a0 = node(i).first; a0 >= 0; a0 = arcs_[static_cast<std::size_t>(a0)].next) {
        if (rcap(a0) == 0.0)
            continue;
        const int j = head(a0);
        if (!node(j).sink || node(j).parent == kFree)
            continue;
        int d = 0;
        for (int k = j;;) {
            if (node(k).ts == time_) {
                d += node(k).dist;
                break;
            }
            const int a = node(k).parent;
            ++d;
            if (a == kTerminal) {
                node(k).ts = time_;
                node(k).dist = 1;
                break;
            }
            if (a == kOrphan) {
                d = kInf;
                break;
            }
            k = head(a);
        }
        if (d == kInf)
            continue;
        if (d < best_dist) {
            best_arc = a0;
            best_dist = d;
        }
        for (int k = j; node(k).ts != time_; k = head(node(k).parent)) {
            node(k).ts = time_;
            node(k).dist = d--;
        }
    }

    if (best_arc != kFree) {
        node(i).parent = best_arc;
        node(i).ts = time_;
        node(i).dist = best_dist + 1;
        return;
    }
    node(i).parent = kFree;
    for (int a0 = node(i).first; a0 >= 0; a0 = arcs_[static_cast<std::size_t>(a0)].next) {
        const int j = head(a0);
        const int a = node(j).parent;
        if (!node(j).sink || a == kFree)
            continue;
        if (rcap(a0) > 0.0)
            activate(j);
        if (a != kTerminal && a != kOrphan && head(a) == i)
            set_orphan_rear(j);
    }
}

double MaxFlow::solve()
{
    active_.clear();
    orphans_.clear();
    for (int i = 0; i < num_nodes(); ++i) {
        Node& n = node(i);
        n.queued = false;
        n.ts = 0;
        if (n.tr_cap > 0.0) {
            n.sink = false;
            n.parent = kTerminal;
            n.dist = 1;
            activate(i);
        } else if (n.tr_cap < 0.0) {
            n.sink = true;
            n.parent = kTerminal;
            n.dist = 1;
            activate(i);
        } else {
            n.parent = kFree;
        }
    }
    time_ = 0;

    int current = -1;
    for (;;) {
        int i = current;
        if (i < 0 || node(i).parent == kFree)
            i = next_active();
        current = -1;
        if (i < 0)
            break;

        int middle = -1;
        if (!node(i).sink) {
            for (int a = node(i).first; a >= 0; a = arcs_[static_cast<std::size_t>(a)].next) {
                if (rcap(a) == 0.0)
                    continue;
                const int j = head(a);
                Node& nj = node(j);
                if (nj.parent == kFree) {
                    nj.sink = false;
                    nj.parent = a ^ 1;
                    nj.ts = node(i).ts;
                    nj.dist = node(i).dist + 1;
                    activate(j);
                } else if (nj.sink) {
                    middle = a;
                    break;
                } else if (nj.ts <= node(i).ts && nj.dist > node(i).dist) {
                    nj.parent = a ^ 1;
                    nj.ts = node(i).ts;
                    nj.dist = node(i).dist + 1;
                }
            }
        } else {
            for (int a = node(i).first; a >= 0; a = arcs_[static_cast<std::size_t>(a)].next) {
                if (rcap(a ^ 1) == 0.0)
                    continue;
                const int j = head(a);
                Node& nj = node(j);
                if (nj.parent == kFree) {
                    nj.sink = true;
                    nj.parent = a ^ 1;
                    nj.ts = node(i).ts;
                    nj.dist = node(i).dist + 1;
                    activate(j);
                } else if (!nj.sink) {
                    middle = a ^ 1;
                    break;
                } else if (nj.ts <= node(i).ts && nj.dist > node(i).dist) {
                    nj.parent = a ^ 1;
                    nj.ts = node(i).ts;
                    nj.dist = node(i).dist + 1;
                }
            }
        }

        ++time_;
        if (middle < 0)
            continue;

        current = i;
        augment(middle);
        while (!orphans_.empty()) {
            const int o = orphans_.front();
            orphans_.pop_front();
            if (node(o).sink)
                process_sink_orphan(o);
            else
                process_source_orphan(o);
        }
    }

    compute_source_set();
    return flow_;
}

void MaxFlow::compute_source_set()
{
    source_set_.assign(nodes_.size(), false);
    std::vector<int> stack;
    for (int i = 0; i < num_nodes(); ++i)
        if (node(i).tr_cap > 0.0) {
            source_set_[static_cast<std::size_t>(i)] = true;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int a = node(i).first; a >= 0; a = arcs_[static_cast<std::size_t>(a)].next) {
            const int j = head(a);
            if (rcap(a) > 0.0 && !source_set_[static_cast<std::size_t>(j)]) {
                source_set_[static_cast<std::size_t>(j)] = true;
                stack.push_back(j);
            }
        }
    }
}

GridEnergy GridEnergy::zeros(int width, int height)
{
    GridEnergy e;
    e.width = width;
    e.height = height;
    e.unary_fg = Raster<double>::Zero(height, width);
    e.unary_bg = Raster<double>::Zero(height, width);
    for (auto& edge : e.edges)
        edge = Raster<double>::Zero(height, width);
    return e;
}

namespace {

bool neighbor_inside(int x, int y, std::size_t d, int width, int height)
{
    const int nx = x + kForwardNeighbors[d][0];
    const int ny = y + kForwardNeighbors[d][1];
    return nx >= 0 && ny >= 0 && nx < width && ny < height;
}

} // namespace

GridEnergy build_grid_energy(const RgbImage& image, const Raster<double>& unary_fg, const Raster<double>& unary_bg,
                             double gamma)
{
    const int width = image.width();
    const int height = image.height();
    if (unary_fg.rows() != height || unary_fg.cols() != width || unary_bg.rows() != height ||
        unary_bg.cols() != width)
        throw Error(ErrorCode::DimensionMismatch, "unary rasters must match the image");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
        throw Error(ErrorCode::InvalidArgument, "gamma must be finite and >= 0");

    GridEnergy e = GridEnergy::zeros(width, height);
    e.unary_fg = unary_fg;
    e.unary_bg = unary_bg;

    std::array<Raster<double>, 4> sq_diff;
    double sum = 0.0;
    long long count = 0;
    for (std::size_t d = 0; d < 4; ++d) {
        sq_diff[d] = Raster<double>::Zero(height, width);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                if (!neighbor_inside(x, y, d, width, height))
                    continue;
                const double s =
                    (image.color(x, y) - image.color(x + kForwardNeighbors[d][0], y + kForwardNeighbors[d][1]))
                        .squaredNorm();
                sq_diff[d](y, x) = s;
                sum += s;
                ++count;
            }
    }
    const double beta = (count > 0 && sum > 0.0) ? 1.0 / (2.0 * sum / static_cast<double>(count)) : 0.0;

    for (std::size_t d = 0; d < 4; ++d) {
        const double inv_dist = d < 2 ? 1.0 : 1.0 / std::sqrt(2.0);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (neighbor_inside(x, y, d, width, height))
                    e.edges[d](y, x) = gamma * std::exp(-beta * sq_diff[d](y, x)) * inv_dist;
    }
    validate(e);
    return e;
}

void validate(const GridEnergy& e)
{
    const auto dims_ok = [&](const Raster<double>& r) { return r.rows() == e.height && r.cols() == e.width; };
    if (e.width < 1 || e.height < 1 || !dims_ok(e.unary_fg) || !dims_ok(e.unary_bg))
        throw Error(ErrorCode::DimensionMismatch, "grid energy rasters do not match its dimensions");
    for (const auto* u : {&e.unary_fg, &e.unary_bg})
        if (!u->allFinite() || (u->size() > 0 && u->minCoeff() < 0.0))
            throw Error(ErrorCode::NegativeUnary, "unary costs must be finite and >= 0");
    for (std::size_t d = 0; d < 4; ++d) {
        const auto& edge = e.edges[d];
        if (!dims_ok(edge))
            throw Error(ErrorCode::DimensionMismatch, "edge raster does not match grid dimensions");
        if (!edge.allFinite() || edge.minCoeff() < 0.0)
            throw Error(ErrorCode::InvalidArgument, "edge weights must be finite and >= 0");
        for (int y = 0; y < e.height; ++y)
            for (int x = 0; x < e.width; ++x)
                if (!neighbor_inside(x, y, d, e.width, e.height) && edge(y, x) != 0.0)
                    throw Error(ErrorCode::InvalidArgument, "edge weight set on a missing neighbor");
    }
}

CutResult min_cut(const GridEnergy& e)
{
    validate(e);
    const int n = e.width * e.height;
    MaxFlow graph(n, static_cast<std::size_t>(n) * 4);
    double constant = 0.0;
    for (int y = 0; y < e.height; ++y)
        for (int x = 0; x < e.width; ++x) {
            const int i = y * e.width + x;
            constant += std::min(e.unary_fg(y, x), e.unary_bg(y, x));
            graph.add_terminal(i, e.unary_bg(y, x), e.unary_fg(y, x));
            for (std::size_t d = 0; d < 4; ++d) {
                const double w = e.edges[d](y, x);
                if (w > 0.0) {
                    const int j = (y + kForwardNeighbors[d][1]) * e.width + x + kForwardNeighbors[d][0];
                    graph.add_edge(i, j, w, w);
                }
            }
        }
    // MaxFlow counts the directly routed s->i->t part; report the flow of the
    // reduced graph so that energy == flow + sum_i min(U_fg, U_bg).
    const double flow = graph.solve() - constant;

    CutoutMask mask(e.width, e.height);
    for (int y = 0; y < e.height; ++y)
        for (int x = 0; x < e.width; ++x)
            mask(x, y) = graph.source_side(y * e.width + x);
    const double energy = labeling_energy(e, mask);
    return CutResult{std::move(mask), energy, flow};
}

double labeling_energy(const GridEnergy& e, const CutoutMask& mask)
{
    if (mask.width() != e.width || mask.height() != e.height)
        throw Error(ErrorCode::DimensionMismatch, "mask does not match grid energy");
    double total = 0.0;
    for (int y = 0; y < e.height; ++y)
        for (int x = 0; x < e.width; ++x) {
            const bool fg = mask(x, y);
            total += fg ? e.unary_fg(y, x) : e.unary_bg(y, x);
            for (std::size_t d = 0; d < 4; ++d) {
                if (!neighbor_inside(x, y, d, e.width, e.height))
                    continue;
                if (fg != mask(x + kForwardNeighbors[d][0], y + kForwardNeighbors[d][1]))
                    total += e.edges[d](y, x);
            }
        }
    return total;
}

} // namespace pmapcut
