#pragma once
// Causal DAG machinery: construction/validation, linear-time d-separation by
// the reachability sweep over (node, entry-direction) states, exhaustive
// path enumeration (kept as the oracle and for human-readable listings),
// the Markov factorization, and the model's implied exclusion checks.
//
// Text format, one declaration per line ('#' starts a comment):
//   node: A            (optional; nodes are auto-registered by edges)
//   latent: K1 [K2..]
//   A -> B

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wrightiv/common.hpp"

namespace wrightiv {

class Dag {
  public:
    struct Node {
        std::string label;
        bool latent = false;
    };

    // Registers a node; duplicate labels are rejected.
    int add_node(const std::string& label, bool latent = false) {
        if (label.empty()) throw ConfigError("Dag: empty node label");
        if (index_.count(label)) {
            throw ConfigError("Dag: duplicate node label '" + label + "'");
        }
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({label, latent});
        index_[label] = id;
        parents_.emplace_back();
        children_.emplace_back();
        return id;
    }

    int ensure_node(const std::string& label) {
        auto it = index_.find(label);
        return it != index_.end() ? it->second : add_node(label);
    }

    // Adds parent -> child; duplicate edges and cycle-creating edges are
    // rejected (acyclicity is maintained incrementally).
    void add_edge(const std::string& parent, const std::string& child) {
        const int p = id_of(parent);
        const int c = id_of(child);
        if (p == c) {
            throw ConfigError("Dag: self-loop on '" + parent + "'");
        }
        for (int existing : children_[p]) {
            if (existing == c) {
                throw ConfigError("Dag: duplicate edge " + parent + " -> " +
                                  child);
            }
        }
        if (reaches(c, p)) {
            throw ConfigError("Dag: edge " + parent + " -> " + child +
                              " would create a cycle");
        }
        children_[p].push_back(c);
        parents_[c].push_back(p);
        edges_.emplace_back(p, c);
    }

    void set_latent(const std::string& label, bool latent = true) {
        nodes_[id_of(label)].latent = latent;
    }

    int size() const { return static_cast<int>(nodes_.size()); }
    long edge_count() const { return static_cast<long>(edges_.size()); }
    bool has_node(const std::string& label) const {
        return index_.count(label) > 0;
    }
    int id_of(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end()) {
            throw ConfigError("Dag: unknown node '" + label + "'");
        }
        return it->second;
    }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    const std::vector<int>& parents(int id) const {
        return parents_[static_cast<std::size_t>(id)];
    }
    const std::vector<int>& children(int id) const {
        return children_[static_cast<std::size_t>(id)];
    }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }

    // Kahn topological order, lowest insertion index first: deterministic.
    std::vector<int> topological_order() const {
        std::vector<int> indegree(nodes_.size(), 0);
        for (const auto& [p, c] : edges_) ++indegree[static_cast<std::size_t>(c)];
        std::set<int> ready;
        for (int v = 0; v < size(); ++v) {
            if (indegree[static_cast<std::size_t>(v)] == 0) ready.insert(v);
        }
        std::vector<int> order;
        order.reserve(nodes_.size());
        while (!ready.empty()) {
            const int v = *ready.begin();
            ready.erase(ready.begin());
            order.push_back(v);
            for (int c : children_[static_cast<std::size_t>(v)]) {
                if (--indegree[static_cast<std::size_t>(c)] == 0) ready.insert(c);
            }
        }
        if (order.size() != nodes_.size()) {
            throw NumericError("Dag: cycle detected in topological sort");
        }
        return order;
    }

    // Parses the one-declaration-per-line text format.
    static Dag parse(const std::string& text,
                     const std::string& origin = "<string>") {
        Dag dag;
        std::istringstream in(text);
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            try {
                if (trimmed.rfind("latent:", 0) == 0) {
                    std::istringstream fields(trimmed.substr(7));
                    std::string label;
                    bool any = false;
                    while (fields >> label) {
                        dag.ensure_node(label);
                        dag.set_latent(label);
                        any = true;
                    }
                    if (!any) throw ConfigError("empty latent declaration");
                } else if (trimmed.rfind("node:", 0) == 0) {
                    std::istringstream fields(trimmed.substr(5));
                    std::string label;
                    bool any = false;
                    while (fields >> label) {
                        dag.ensure_node(label);
                        any = true;
                    }
                    if (!any) throw ConfigError("empty node declaration");
                } else {
                    const auto arrow = trimmed.find("->");
                    if (arrow == std::string::npos) {
                        throw ConfigError(
                            "expected 'parent -> child', 'node:' or 'latent:'");
                    }
                    const std::string parent = trim(trimmed.substr(0, arrow));
                    const std::string child = trim(trimmed.substr(arrow + 2));
                    if (parent.empty() || child.empty() ||
                        parent.find(' ') != std::string::npos ||
                        child.find(' ') != std::string::npos) {
                        throw ConfigError("malformed edge declaration");
                    }
                    dag.ensure_node(parent);
                    dag.ensure_node(child);
                    dag.add_edge(parent, child);
                }
            } catch (const ConfigError& err) {
                throw ParseError(err.what(), origin, line_no);
            }
        }
        return dag;
    }

    std::string to_text() const {
        std::ostringstream out;
        for (const auto& n : nodes_) {
            if (parents_[static_cast<std::size_t>(index_.at(n.label))].empty() &&
                children_[static_cast<std::size_t>(index_.at(n.label))].empty()) {
                out << "node: " << n.label << "\n";
            }
        }
        for (const auto& n : nodes_) {
            if (n.latent) out << "latent: " << n.label << "\n";
        }
        for (const auto& [p, c] : edges_) {
            out << nodes_[static_cast<std::size_t>(p)].label << " -> "
                << nodes_[static_cast<std::size_t>(c)].label << "\n";
        }
        return out.str();
    }

  private:
    static std::string trim(const std::string& s) {
        const auto first = s.find_first_not_of(" \t\r");
        if (first == std::string::npos) return "";
        const auto last = s.find_last_not_of(" \t\r");
        return s.substr(first, last - first + 1);
    }

    bool reaches(int from, int to) const {
        if (from == to) return true;
        std::vector<int> stack{from};
        std::vector<char> seen(nodes_.size(), 0);
        seen[static_cast<std::size_t>(from)] = 1;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int c : children_[static_cast<std::size_t>(v)]) {
                if (c == to) return true;
                if (!seen[static_cast<std::size_t>(c)]) {
                    seen[static_cast<std::size_t>(c)] = 1;
                    stack.push_back(c);
                }
            }
        }
        return false;
    }

    std::vector<Node> nodes_;
    std::map<std::string, int> index_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
};

// The demand-supply identification DAG. Without covariates: 8 nodes and 10
// edges; with W included: 9 nodes and 13 edges (adding W -> D, W -> S,
// K1 -> W). D and S (the latent demand and supply functions) and the factors
// K1, K2 are latent; the shifters, price, quantity, and W are observed.
inline Dag build_wright_dag(bool include_w = false) {
    Dag dag;
    dag.add_node("Zd");
    dag.add_node("Zs");
    dag.add_node("K1", /*latent=*/true);
    dag.add_node("K2", /*latent=*/true);
    dag.add_node("D", /*latent=*/true);
    dag.add_node("S", /*latent=*/true);
    dag.add_node("P");
    dag.add_node("Y");
    if (include_w) dag.add_node("W");

    dag.add_edge("Zd", "D");
    dag.add_edge("Zs", "S");
    if (include_w) {
        dag.add_edge("W", "D");
        dag.add_edge("W", "S");
    }
    dag.add_edge("K1", "Zd");
    dag.add_edge("K1", "Zs");
    if (include_w) dag.add_edge("K1", "W");
    dag.add_edge("K2", "D");
    dag.add_edge("K2", "S");
    dag.add_edge("D", "P");
    dag.add_edge("D", "Y");
    dag.add_edge("S", "P");
    dag.add_edge("S", "Y");
    return dag;
}

struct SeparationQuery {
    std::vector<std::string> x;
    std::vector<std::string> y;
    std::vector<std::string> z;
};

namespace detail {

inline std::vector<char> label_mask(const Dag& dag,
                                    const std::vector<std::string>& labels) {
    std::vector<char> mask(static_cast<std::size_t>(dag.size()), 0);
    for (const auto& label : labels) {
        mask[static_cast<std::size_t>(dag.id_of(label))] = 1;
    }
    return mask;
}

inline void validate_query(const Dag& dag, const SeparationQuery& query) {
    if (query.x.empty() || query.y.empty()) {
        throw ConfigError("SeparationQuery: x and y must be non-empty");
    }
    const auto x = label_mask(dag, query.x);
    const auto y = label_mask(dag, query.y);
    const auto z = label_mask(dag, query.z);
    for (int v = 0; v < dag.size(); ++v) {
        const auto i = static_cast<std::size_t>(v);
        if ((x[i] && y[i]) || (x[i] && z[i]) || (y[i] && z[i])) {
            throw ConfigError(
                "SeparationQuery: x, y, z must be pairwise disjoint (node '" +
                dag.node(v).label + "')");
        }
    }
}

}  // namespace detail

// Linear-time d-separation: reachability sweep over states (node, direction
// of entry), where a node entered "downward" (from a parent) may only be
// exited through children unless it is an ancestor of the conditioning set
// (collider opening), and a node entered "upward" (from a child) continues
// to both parents and children unless conditioned on.
inline bool d_separated(const Dag& dag, const SeparationQuery& query) {
    detail::validate_query(dag, query);
    const auto x_mask = detail::label_mask(dag, query.x);
    const auto y_mask = detail::label_mask(dag, query.y);
    const auto z_mask = detail::label_mask(dag, query.z);
    const auto n = static_cast<std::size_t>(dag.size());

    // Ancestors of the conditioning set (inclusive).
    std::vector<char> z_ancestor(n, 0);
    {
        std::vector<int> stack;
        for (int v = 0; v < dag.size(); ++v) {
            if (z_mask[static_cast<std::size_t>(v)]) {
                z_ancestor[static_cast<std::size_t>(v)] = 1;
                stack.push_back(v);
            }
        }
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int p : dag.parents(v)) {
                if (!z_ancestor[static_cast<std::size_t>(p)]) {
                    z_ancestor[static_cast<std::size_t>(p)] = 1;
                    stack.push_back(p);
                }
            }
        }
    }

    // States: (node, entered-from-child = "up" | entered-from-parent =
    // "down"). Sources are entered as if from a virtual child ("up").
    enum Direction { up = 0, down = 1 };
    std::vector<char> visited[2] = {std::vector<char>(n, 0),
                                    std::vector<char>(n, 0)};
    std::vector<std::pair<int, Direction>> stack;
    for (const auto& label : query.x) {
        stack.emplace_back(dag.id_of(label), up);
    }

    while (!stack.empty()) {
        const auto [v, dir] = stack.back();
        stack.pop_back();
        const auto vi = static_cast<std::size_t>(v);
        if (visited[dir][vi]) continue;
        visited[dir][vi] = 1;

        if (!z_mask[vi] && y_mask[vi]) return false;  // reached y

        if (dir == up) {
            if (z_mask[vi]) continue;  // conditioned non-collider blocks
            for (int p : dag.parents(v)) stack.emplace_back(p, up);
            for (int c : dag.children(v)) stack.emplace_back(c, down);
        } else {
            if (!z_mask[vi]) {
                for (int c : dag.children(v)) stack.emplace_back(c, down);
            }
            if (z_ancestor[vi]) {
                // Collider (or conditioned descendant path) opens upward.
                for (int p : dag.parents(v)) stack.emplace_back(p, up);
            }
        }
    }
    return true;
}

// One undirected simple path with per-edge orientation: forward[i] is true
// when the i-th step traverses an edge parent -> child in its own direction.
struct DagPath {
    std::vector<int> nodes;
    std::vector<bool> forward;

    std::string render(const Dag& dag) const {
        std::string out = dag.node(nodes.front()).label;
        for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
            out += forward[i] ? " -> " : " <- ";
            out += dag.node(nodes[i + 1]).label;
        }
        return out;
    }
};

// All simple undirected paths between two nodes, in deterministic
// (node-index) DFS order. Exponential in general; intended for small graphs
// and as the d-separation oracle.
inline std::vector<DagPath> enumerate_paths(const Dag& dag,
                                            const std::string& x,
                                            const std::string& y) {
    const int source = dag.id_of(x);
    const int target = dag.id_of(y);
    if (source == target) {
        throw ConfigError("enumerate_paths: endpoints must differ");
    }

    // Undirected adjacency with orientation, sorted by neighbor index.
    struct Step {
        int next;
        bool forward;
    };
    std::vector<std::vector<Step>> adjacency(
        static_cast<std::size_t>(dag.size()));
    for (const auto& [p, c] : dag.edges()) {
        adjacency[static_cast<std::size_t>(p)].push_back({c, true});
        adjacency[static_cast<std::size_t>(c)].push_back({p, false});
    }
    for (auto& steps : adjacency) {
        std::sort(steps.begin(), steps.end(),
                  [](const Step& lhs, const Step& rhs) {
                      if (lhs.next != rhs.next) return lhs.next < rhs.next;
                      return lhs.forward < rhs.forward;
                  });
    }

    std::vector<DagPath> paths;
    std::vector<char> on_path(static_cast<std::size_t>(dag.size()), 0);
    DagPath current;
    current.nodes.push_back(source);
    on_path[static_cast<std::size_t>(source)] = 1;

    std::function<void(int)> dfs = [&](int v) {
        if (v == target) {
            paths.push_back(current);
            return;
        }
        for (const Step& step : adjacency[static_cast<std::size_t>(v)]) {
            if (on_path[static_cast<std::size_t>(step.next)]) continue;
            on_path[static_cast<std::size_t>(step.next)] = 1;
            current.nodes.push_back(step.next);
            current.forward.push_back(step.forward);
            dfs(step.next);
            current.nodes.pop_back();
            current.forward.pop_back();
            on_path[static_cast<std::size_t>(step.next)] = 0;
        }
    };
    dfs(source);
    return paths;
}

// Whether a path contains at least one collider (node with both adjacent
// edges pointing into it).
inline bool path_has_collider(const DagPath& path) {
    for (std::size_t i = 1; i + 1 < path.nodes.size(); ++i) {
        if (path.forward[i - 1] && !path.forward[i]) return true;
    }
    return false;
}

// Path-blocking test for the enumeration oracle: a non-collider interior
// node blocks iff it is conditioned on; a collider blocks iff neither it nor
// any of its descendants is conditioned on.
inline bool path_blocked(const Dag& dag, const DagPath& path,
                         const std::vector<std::string>& z) {
    const auto z_mask = detail::label_mask(dag, z);
    // Descendants-of-z test via ancestor closure of z.
    std::vector<char> z_ancestor = z_mask;
    std::vector<int> stack;
    for (int v = 0; v < dag.size(); ++v) {
        if (z_mask[static_cast<std::size_t>(v)]) stack.push_back(v);
    }
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int p : dag.parents(v)) {
            if (!z_ancestor[static_cast<std::size_t>(p)]) {
                z_ancestor[static_cast<std::size_t>(p)] = 1;
                stack.push_back(p);
            }
        }
    }

    for (std::size_t i = 1; i + 1 < path.nodes.size(); ++i) {
        const auto vi = static_cast<std::size_t>(path.nodes[i]);
        const bool collider = path.forward[i - 1] && !path.forward[i];
        if (collider) {
            if (!z_ancestor[vi]) return true;
        } else {
            if (z_mask[vi]) return true;
        }
    }
    return false;
}

// Exhaustive-path d-separation (the oracle): every path between every
// (x, y) pair must be blocked.
inline bool d_separated_by_paths(const Dag& dag, const SeparationQuery& query) {
    detail::validate_query(dag, query);
    for (const auto& x : query.x) {
        for (const auto& y : query.y) {
            for (const auto& path : enumerate_paths(dag, x, y)) {
                if (!path_blocked(dag, path, query.z)) return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Factorization
// ---------------------------------------------------------------------------

struct Factor {
    std::string child;
    std::vector<std::string> parents;  // in edge insertion order
};

// Markov factorization f(child | parents) in topological order.
inline std::vector<Factor> factorization(const Dag& dag) {
    std::vector<Factor> factors;
    for (int v : dag.topological_order()) {
        Factor f;
        f.child = dag.node(v).label;
        for (int p : dag.parents(v)) f.parents.push_back(dag.node(p).label);
        factors.push_back(std::move(f));
    }
    return factors;
}

namespace detail {

inline std::string pretty_label(const std::string& label) {
    static const std::map<std::string, std::string> special = {
        {"Zd", "z^d"}, {"Zs", "z^s"}, {"K1", "k_1"}, {"K2", "k_2"}};
    auto it = special.find(label);
    if (it != special.end()) return it->second;
    std::string out = label;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    return out;
}

}  // namespace detail

// Human-readable product string, e.g. "f(k_1)f(z^d | k_1)...".
inline std::string render_factorization(const std::vector<Factor>& factors) {
    std::string out;
    for (const auto& f : factors) {
        out += "f(" + detail::pretty_label(f.child);
        if (!f.parents.empty()) {
            out += " | ";
            for (std::size_t i = 0; i < f.parents.size(); ++i) {
                if (i) out += ", ";
                out += detail::pretty_label(f.parents[i]);
            }
        }
        out += ")";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Implied exclusion checks
// ---------------------------------------------------------------------------

struct ExclusionCheck {
    SeparationQuery query;
    bool separated = false;
    std::string description;
};

// The exclusion restrictions the identification argument relies on:
//   (D  indep  Zs | Zd [, W])     demand excludes the supply shifter
//   (S  indep  Zd | Zs [, W])     supply excludes the demand shifter
// and, when no K1 confounds the shifters, the marginal (Zd indep Zs).
inline std::vector<ExclusionCheck> implied_exclusions(const Dag& dag) {
    for (const char* label : {"D", "S", "Zd", "Zs"}) {
        if (!dag.has_node(label)) {
            throw ConfigError(
                std::string("implied_exclusions: expected node '") + label +
                "' (requires the demand-supply DAG labels)");
        }
    }
    const bool with_w = dag.has_node("W");

    std::vector<ExclusionCheck> checks;
    {
        ExclusionCheck check;
        check.query.x = {"D"};
        check.query.y = {"Zs"};
        check.query.z = {"Zd"};
        if (with_w) check.query.z.push_back("W");
        check.description = "demand excludes the supply shifter";
        check.separated = d_separated(dag, check.query);
        checks.push_back(std::move(check));
    }
    {
        ExclusionCheck check;
        check.query.x = {"S"};
        check.query.y = {"Zd"};
        check.query.z = {"Zs"};
        if (with_w) check.query.z.push_back("W");
        check.description = "supply excludes the demand shifter";
        check.separated = d_separated(dag, check.query);
        checks.push_back(std::move(check));
    }
    if (!dag.has_node("K1")) {
        ExclusionCheck check;
        check.query.x = {"Zd"};
        check.query.y = {"Zs"};
        check.description = "shifters marginally independent (no K1)";
        check.separated = d_separated(dag, check.query);
        checks.push_back(std::move(check));
    }
    return checks;
}

}  // namespace wrightiv
