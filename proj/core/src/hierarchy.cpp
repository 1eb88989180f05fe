#include "mmblock/hierarchy.hpp"

#include "mmblock/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>

namespace mmb {

namespace {

std::vector<std::size_t> normalized_support(std::vector<std::size_t> support) {
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    if (support.empty()) throw ConfigError("segment support must not be empty");
    return support;
}

bool supports_overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia == *ib) return true;
        if (*ia < *ib) ++ia; else ++ib;
    }
    return false;
}

} // namespace

SegmentFilter SegmentFilter::identity(std::size_t extent) {
    std::vector<std::size_t> all(extent);
    for (std::size_t i = 0; i < extent; ++i) all[i] = i;
    auto f = block(std::move(all));
    f.label_ = "identity";
    return f;
}

SegmentFilter SegmentFilter::block(std::vector<std::size_t> support) {
    SegmentFilter f;
    f.kind_ = Kind::block_identity;
    f.support_ = normalized_support(std::move(support));
    f.label_ = "identity";
    return f;
}

SegmentFilter SegmentFilter::range(std::size_t start, std::size_t length) {
    std::vector<std::size_t> support(length);
    for (std::size_t i = 0; i < length; ++i) support[i] = start + i;
    return block(std::move(support));
}

SegmentFilter SegmentFilter::general(std::vector<std::size_t> support, Matrix filter, std::string label) {
    SegmentFilter f;
    f.kind_ = Kind::general;
    f.support_ = normalized_support(std::move(support));
    const auto n = static_cast<Eigen::Index>(f.support_.size());
    if (filter.rows() != n || filter.cols() != n) {
        throw DimensionError("general filter must be |support| x |support|");
    }
    f.filter_ = std::move(filter);
    f.label_ = std::move(label);
    return f;
}

bool SegmentFilter::contains(std::size_t index) const {
    return std::binary_search(support_.begin(), support_.end(), index);
}

Matrix SegmentFilter::segmentation(std::size_t extent) const {
    Matrix s = Matrix::Zero(static_cast<Eigen::Index>(extent), static_cast<Eigen::Index>(extent));
    for (std::size_t i : support_) {
        if (i >= extent) throw DimensionError("filter support exceeds mode extent");
        s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    }
    return s;
}

Matrix SegmentFilter::general_part(std::size_t extent) const {
    if (kind_ == Kind::block_identity) return segmentation(extent);
    Matrix f = Matrix::Zero(static_cast<Eigen::Index>(extent), static_cast<Eigen::Index>(extent));
    for (std::size_t a = 0; a < support_.size(); ++a) {
        for (std::size_t b = 0; b < support_.size(); ++b) {
            if (support_[a] >= extent || support_[b] >= extent) {
                throw DimensionError("filter support exceeds mode extent");
            }
            f(static_cast<Eigen::Index>(support_[a]), static_cast<Eigen::Index>(support_[b])) =
                filter_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
    }
    return f;
}

Matrix SegmentFilter::matrix(std::size_t extent) const {
    // F is already embedded inside the support, so F S = F here.
    return general_part(extent);
}

DenseTensor segment(const DenseTensor& data, const SegmentFilter& filter) {
    if (data.order() == 0) throw DimensionError("segment: empty tensor");
    const std::size_t rows = data.extent(0);
    if (!filter.support().empty() && filter.support().back() >= rows) {
        throw DimensionError("segment: filter support exceeds mode-0 extent " + std::to_string(rows));
    }
    if (filter.kind() == SegmentFilter::Kind::general) return mode_product(data, 0, filter.matrix(rows));
    DenseTensor out(data.shape());
    const std::size_t fibers = data.size() / rows;
    for (std::size_t f = 0; f < fibers; ++f) {
        for (std::size_t i : filter.support()) out.data()[f * rows + i] = data.data()[f * rows + i];
    }
    return out;
}

BankReport validate_bank(const std::vector<SegmentFilter>& filters, std::size_t extent) {
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(extent), static_cast<Eigen::Index>(extent));
    for (const auto& f : filters) sum += f.matrix(extent);
    BankReport report;
    report.max_deviation =
        extent == 0 ? 0.0 : (sum - Matrix::Identity(sum.rows(), sum.cols())).cwiseAbs().maxCoeff();
    report.pass = !filters.empty() && report.max_deviation <= kBankTolerance;
    return report;
}

HierarchySpec::HierarchySpec(std::size_t extent, const std::vector<NodeConfig>& nodes,
                             std::vector<Compositionality> compositional)
    : extent_(extent), compositional_(std::move(compositional)) {
    if (extent == 0) throw ConfigError("hierarchy extent must be positive");
    if (nodes.empty()) throw ConfigError("hierarchy has no nodes");
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].id.empty()) throw ConfigError("hierarchy node without id");
        if (!by_id.emplace(nodes[i].id, i).second) throw ConfigError("duplicate node id '" + nodes[i].id + "'");
        const auto& support = nodes[i].filter.support();
        if (support.empty()) throw ConfigError("node '" + nodes[i].id + "' has an empty support");
        if (support.back() >= extent) throw ConfigError("node '" + nodes[i].id + "' support exceeds extent");
    }
    std::optional<std::size_t> root;
    std::vector<std::vector<std::size_t>> kids(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].parent.empty()) {
            if (root) throw ConfigError("hierarchy has more than one root");
            root = i;
            continue;
        }
        const auto it = by_id.find(nodes[i].parent);
        if (it == by_id.end()) throw ConfigError("node '" + nodes[i].id + "' names unknown parent '" + nodes[i].parent + "'");
        if (it->second == i) throw ConfigError("node '" + nodes[i].id + "' is its own parent");
        kids[it->second].push_back(i);
    }
    if (!root) throw ConfigError("hierarchy has no root");

    // Depth-first from the root; anything unreachable sits on a cycle.
    std::vector<std::size_t> order;
    std::vector<std::optional<std::size_t>> new_parent(nodes.size());
    std::function<void(std::size_t)> visit = [&](std::size_t i) {
        order.push_back(i);
        auto children = kids[i];
        std::stable_sort(children.begin(), children.end(), [&](std::size_t a, std::size_t b) {
            const auto fa = nodes[a].filter.first_index();
            const auto fb = nodes[b].filter.first_index();
            return fa != fb ? fa < fb : nodes[a].id < nodes[b].id;
        });
        for (std::size_t c : children) visit(c);
    };
    visit(*root);
    if (order.size() != nodes.size()) throw ConfigError("hierarchy contains a cycle");

    std::vector<std::size_t> position(nodes.size());
    for (std::size_t p = 0; p < order.size(); ++p) position[order[p]] = p;
    nodes_.resize(nodes.size());
    for (std::size_t p = 0; p < order.size(); ++p) {
        const auto& cfg = nodes[order[p]];
        auto& node = nodes_[p];
        node.id = cfg.id;
        node.filter = cfg.filter;
        if (!cfg.parent.empty()) node.parent = position[by_id.at(cfg.parent)];
    }
    for (std::size_t p = 1; p < nodes_.size(); ++p) nodes_[*nodes_[p].parent].children.push_back(p);
}

std::optional<std::size_t> HierarchySpec::find(const std::string& id) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].id == id) return i;
    return std::nullopt;
}

std::vector<std::size_t> HierarchySpec::leaves() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].children.empty()) out.push_back(i);
    return out;
}

std::size_t HierarchySpec::depth(std::size_t index) const {
    std::size_t d = 0;
    for (auto p = nodes_.at(index).parent; p; p = nodes_[*p].parent) ++d;
    return d;
}

Compositionality HierarchySpec::compositional(std::size_t factor) const {
    if (factor == 0) throw DimensionError("the measurement mode has no compositionality flag");
    return factor - 1 < compositional_.size() ? compositional_[factor - 1] : Compositionality::full;
}

std::vector<SegmentFilter> HierarchySpec::leaf_filters() const {
    std::vector<SegmentFilter> out;
    for (std::size_t i : leaves()) out.push_back(nodes_[i].filter);
    return out;
}

BankReport HierarchySpec::leaf_bank() const { return validate_bank(leaf_filters(), extent_); }

double HierarchySpec::children_bank_deviation() const {
    double worst = 0.0;
    for (const auto& node : nodes_) {
        if (node.children.empty()) continue;
        Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(extent_), static_cast<Eigen::Index>(extent_));
        for (std::size_t c : node.children) sum += nodes_[c].filter.matrix(extent_);
        worst = std::max(worst, (sum - node.filter.matrix(extent_)).cwiseAbs().maxCoeff());
    }
    return worst;
}

bool HierarchySpec::leaves_disjoint() const {
    const auto leaf = leaves();
    for (std::size_t a = 0; a < leaf.size(); ++a)
        for (std::size_t b = a + 1; b < leaf.size(); ++b)
            if (supports_overlap(nodes_[leaf[a]].filter.support(), nodes_[leaf[b]].filter.support())) return false;
    return true;
}

std::vector<NodeConfig> HierarchySpec::to_configs() const {
    std::vector<NodeConfig> out;
    for (const auto& node : nodes_) {
        out.push_back({node.id, node.parent ? nodes_[*node.parent].id : std::string{}, node.filter});
    }
    return out;
}

DenseTensor HierarchicalView::bank_sum() const {
    if (bank.empty()) throw ConfigError("hierarchical view has an empty bank");
    DenseTensor sum = segments.at(bank.front());
    for (std::size_t i = 1; i < bank.size(); ++i) sum += segments.at(bank[i]);
    return sum;
}

HierarchicalView assemble_hierarchical(const DenseTensor& data, const HierarchySpec& spec) {
    if (data.extent(0) != spec.extent()) throw DimensionError("hierarchy extent does not match mode-0 extent");
    const auto report = spec.leaf_bank();
    if (!report.pass) {
        throw ConfigError("hierarchy leaves do not form a filter bank (deviation " +
                          std::to_string(report.max_deviation) + ")");
    }
    HierarchicalView view;
    view.segments.reserve(spec.node_count());
    for (const auto& node : spec.nodes()) view.segments.push_back(segment(data, node.filter));
    view.bank = spec.leaves();
    return view;
}

HierarchySpec expand_overlaps(const HierarchySpec& spec) {
    const auto& nodes = spec.nodes();
    std::vector<NodeConfig> configs;
    std::vector<std::pair<std::string, std::vector<std::string>>> derived_names;

    std::function<void(std::size_t)> emit_subtree = [&](std::size_t i) {
        const auto& node = nodes[i];
        const auto& children = node.children;
        std::vector<bool> overlapping(children.size(), false);
        for (std::size_t a = 0; a < children.size(); ++a) {
            for (std::size_t b = a + 1; b < children.size(); ++b) {
                if (supports_overlap(nodes[children[a]].filter.support(), nodes[children[b]].filter.support())) {
                    overlapping[a] = overlapping[b] = true;
                }
            }
        }
        // Membership pattern (over overlapping children) -> indices.
        std::map<std::vector<std::size_t>, std::vector<std::size_t>> atoms;
        std::set<std::size_t> covered;
        for (std::size_t a = 0; a < children.size(); ++a) {
            if (overlapping[a]) covered.insert(nodes[children[a]].filter.support().begin(), nodes[children[a]].filter.support().end());
        }
        for (std::size_t index : covered) {
            std::vector<std::size_t> members;
            for (std::size_t a = 0; a < children.size(); ++a) {
                if (overlapping[a] && nodes[children[a]].filter.contains(index)) members.push_back(a);
            }
            atoms[members].push_back(index);
        }
        std::map<std::size_t, std::vector<std::string>> atoms_of_child;
        for (const auto& [members, indices] : atoms) {
            std::string id;
            if (members.size() == 1) {
                id = nodes[children[members[0]]].id + ".own";
            } else {
                for (std::size_t k = 0; k < members.size(); ++k) id += (k ? "&" : "") + nodes[children[members[k]]].id;
            }
            configs.push_back({id, node.id, SegmentFilter::block(indices)});
            for (std::size_t a : members) atoms_of_child[a].push_back(id);
        }
        for (const auto& [a, ids] : atoms_of_child) derived_names.emplace_back(nodes[children[a]].id, ids);
        for (std::size_t a = 0; a < children.size(); ++a) {
            if (overlapping[a]) continue;
            const auto& child = nodes[children[a]];
            configs.push_back({child.id, node.id, child.filter});
            emit_subtree(children[a]);
        }
    };
    configs.push_back({nodes[0].id, std::string{}, nodes[0].filter});
    emit_subtree(0);

    HierarchySpec out(spec.extent(), configs, spec.compositional_flags());
    out.derived_ = spec.derived_;
    for (auto& whole : out.derived_) {
        // Node indices may move; re-resolve through the old ids.
        for (auto& atom : whole.atoms) atom = *out.find(spec.node(atom).id);
    }
    for (const auto& [id, atom_ids] : derived_names) {
        DerivedWhole whole{id, {}};
        for (const auto& atom_id : atom_ids) whole.atoms.push_back(*out.find(atom_id));
        out.derived_.push_back(std::move(whole));
    }
    return out;
}

namespace {

// Binomial smoothing followed by decimation, as a circulant (n/2) x n matrix.
Matrix reduce_operator(std::size_t n) {
    const auto half = static_cast<Eigen::Index>(n / 2);
    Matrix r = Matrix::Zero(half, static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < half; ++i) {
        const auto centre = static_cast<std::size_t>(2 * i);
        r(i, static_cast<Eigen::Index>(centre)) += 0.5;
        r(i, static_cast<Eigen::Index>((centre + 1) % n)) += 0.25;
        r(i, static_cast<Eigen::Index>((centre + n - 1) % n)) += 0.25;
    }
    return r;
}

} // namespace

std::vector<SegmentFilter> pyramid_filters(std::size_t levels, const std::vector<std::size_t>& support) {
    const std::size_t n = support.size();
    if (levels == 0) throw DimensionError("pyramid needs at least one level");
    if (levels > 1) {
        const double max_levels = std::floor(std::log2(static_cast<double>(n)));
        if (static_cast<double>(levels) > max_levels || n % (std::size_t{1} << (levels - 1)) != 0) {
            throw DimensionError("pyramid with " + std::to_string(levels) + " levels does not fit a support of " +
                                 std::to_string(n));
        }
    }
    const auto size = static_cast<Eigen::Index>(n);
    std::vector<Matrix> lowpass{Matrix::Identity(size, size)};
    Matrix down = Matrix::Identity(size, size);  // R_l ... R_1
    Matrix up = Matrix::Identity(size, size);    // E_1 ... E_l
    std::size_t current = n;
    for (std::size_t l = 1; l < levels; ++l) {
        const Matrix r = reduce_operator(current);
        down = r * down;
        up = up * (2.0 * r.transpose());
        lowpass.push_back(up * down);
        current /= 2;
    }
    std::vector<SegmentFilter> bank;
    for (std::size_t l = 0; l < levels; ++l) {
        Matrix band = l + 1 < levels ? Matrix(lowpass[l] - lowpass[l + 1]) : lowpass[l];
        bank.push_back(SegmentFilter::general(support, std::move(band), "pyramid:" + std::to_string(l)));
    }
    return bank;
}

std::vector<SegmentFilter> pyramid_filters(std::size_t levels, std::size_t length) {
    std::vector<std::size_t> support(length);
    for (std::size_t i = 0; i < length; ++i) support[i] = i;
    return pyramid_filters(levels, support);
}

HierarchySpec split_parts(std::size_t extent, std::size_t parts, std::vector<Compositionality> compositional) {
    if (parts == 0 || parts > extent) throw ConfigError("cannot split " + std::to_string(extent) + " into " + std::to_string(parts) + " parts");
    std::vector<NodeConfig> nodes{{"root", "", SegmentFilter::identity(extent)}};
    std::size_t start = 0;
    for (std::size_t p = 0; p < parts; ++p) {
        const std::size_t end = extent * (p + 1) / parts;
        nodes.push_back({"part" + std::to_string(p), "root", SegmentFilter::range(start, end - start)});
        start = end;
    }
    return HierarchySpec(extent, nodes, std::move(compositional));
}

HierarchySpec uniform_subdivision(std::size_t extent, std::size_t levels, std::size_t arity,
                                  std::vector<Compositionality> compositional) {
    if (levels == 0 || arity < 2) throw ConfigError("subdivision needs levels >= 1 and arity >= 2");
    std::vector<NodeConfig> nodes;
    std::function<void(const std::string&, const std::string&, std::size_t, std::size_t, std::size_t)> add =
        [&](const std::string& id, const std::string& parent, std::size_t start, std::size_t length, std::size_t level) {
            if (length == 0) throw ConfigError("subdivision produced an empty segment");
            nodes.push_back({id, parent, SegmentFilter::range(start, length)});
            if (level + 1 >= levels) return;
            std::size_t offset = start;
            for (std::size_t k = 0; k < arity; ++k) {
                const std::size_t end = start + length * (k + 1) / arity;
                add(id + "." + std::to_string(k), id, offset, end - offset, level + 1);
                offset = end;
            }
        };
    add("root", "", 0, extent, 0);
    return HierarchySpec(extent, nodes, std::move(compositional));
}

namespace {

using nlohmann::json;

std::string node_id(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_number_integer()) return std::to_string(value.get<long long>());
    throw ConfigError("node ids must be strings or integers");
}

Compositionality parse_compositionality(const json& value) {
    const auto text = value.get<std::string>();
    if (text == "full") return Compositionality::full;
    if (text == "shared") return Compositionality::shared;
    throw ConfigError("compositional flag must be \"full\" or \"shared\", got \"" + text + "\"");
}

} // namespace

HierarchySpec hierarchy_from_json(const std::string& text, std::size_t extent) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("hierarchy config: ") + e.what());
    }
    try {
        struct RawNode {
            std::string id, parent, filter;
            std::optional<std::vector<std::size_t>> support;
            std::optional<Matrix> matrix;
        };
        std::vector<RawNode> raw;
        for (const auto& n : doc.at("nodes")) {
            RawNode r;
            r.id = node_id(n.at("id"));
            if (n.contains("parent") && !n["parent"].is_null()) r.parent = node_id(n["parent"]);
            r.filter = n.value("filter", std::string("identity"));
            if (n.contains("support")) {
                const auto s = n["support"].get<std::vector<std::size_t>>();
                if (s.size() != 2) throw ConfigError("support must be [start, length]");
                std::vector<std::size_t> idx(s[1]);
                for (std::size_t i = 0; i < s[1]; ++i) idx[i] = s[0] + i;
                r.support = idx;
            } else if (n.contains("indices")) {
                r.support = n["indices"].get<std::vector<std::size_t>>();
            }
            if (n.contains("matrix")) {
                const auto values = n["matrix"].get<std::vector<double>>();
                const auto dim = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(values.size()))));
                if (dim * dim != static_cast<Eigen::Index>(values.size())) throw ConfigError("general filter matrix must be square");
                r.matrix = Eigen::Map<const Matrix>(values.data(), dim, dim);
            }
            raw.push_back(std::move(r));
        }
        std::unordered_map<std::string, std::size_t> by_id;
        for (std::size_t i = 0; i < raw.size(); ++i) by_id[raw[i].id] = i;

        // Resolve inherited supports parent-first.
        std::vector<int> state(raw.size(), 0);
        std::function<const std::vector<std::size_t>&(std::size_t)> resolve = [&](std::size_t i) -> const std::vector<std::size_t>& {
            if (state[i] == 1) throw ConfigError("hierarchy contains a cycle");
            if (state[i] == 0) {
                state[i] = 1;
                if (!raw[i].support) {
                    if (raw[i].parent.empty()) {
                        std::vector<std::size_t> all(extent);
                        for (std::size_t k = 0; k < extent; ++k) all[k] = k;
                        raw[i].support = all;
                    } else {
                        const auto it = by_id.find(raw[i].parent);
                        if (it == by_id.end()) throw ConfigError("unknown parent '" + raw[i].parent + "'");
                        raw[i].support = resolve(it->second);
                    }
                }
                state[i] = 2;
            }
            return *raw[i].support;
        };
        for (std::size_t i = 0; i < raw.size(); ++i) resolve(i);

        std::map<std::string, std::size_t> pyramid_depth;
        for (const auto& r : raw) {
            if (r.filter.rfind("pyramid:", 0) == 0) {
                const auto level = std::stoul(r.filter.substr(8));
                auto& d = pyramid_depth[r.parent];
                d = std::max<std::size_t>(d, level + 1);
            }
        }
        std::vector<NodeConfig> configs;
        for (const auto& r : raw) {
            SegmentFilter filter;
            if (r.filter == "identity") {
                filter = SegmentFilter::block(*r.support);
            } else if (r.filter.rfind("pyramid:", 0) == 0) {
                const auto level = std::stoul(r.filter.substr(8));
                filter = pyramid_filters(pyramid_depth.at(r.parent), *r.support).at(level);
            } else if (r.filter == "general") {
                if (!r.matrix) throw ConfigError("general filter on node '" + r.id + "' needs a matrix");
                filter = SegmentFilter::general(*r.support, *r.matrix);
            } else {
                throw ConfigError("unknown filter '" + r.filter + "'");
            }
            configs.push_back({r.id, r.parent, std::move(filter)});
        }

        std::vector<Compositionality> flags;
        if (doc.contains("compositional")) {
            const auto& comp = doc["compositional"];
            if (comp.is_array()) {
                for (const auto& v : comp) flags.push_back(parse_compositionality(v));
            } else {
                for (const auto& [key, value] : comp.items()) {
                    const auto factor = std::stoul(key);
                    if (factor == 0) throw ConfigError("compositional factors are numbered from 1");
                    if (flags.size() < factor) flags.resize(factor, Compositionality::full);
                    flags[factor - 1] = parse_compositionality(value);
                }
            }
        }
        return HierarchySpec(extent, configs, std::move(flags));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("hierarchy config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("hierarchy config: ") + e.what());
    }
}

std::string hierarchy_to_json(const HierarchySpec& spec) {
    json nodes = json::array();
    for (const auto& cfg : spec.to_configs()) {
        json n;
        n["id"] = cfg.id;
        n["parent"] = cfg.parent.empty() ? json(nullptr) : json(cfg.parent);
        const auto& support = cfg.filter.support();
        const bool contiguous = support.back() - support.front() + 1 == support.size();
        if (contiguous) {
            n["support"] = {support.front(), support.size()};
        } else {
            n["indices"] = support;
        }
        if (cfg.filter.kind() == SegmentFilter::Kind::block_identity) {
            n["filter"] = "identity";
        } else if (cfg.filter.label().rfind("pyramid:", 0) == 0) {
            n["filter"] = cfg.filter.label();
        } else {
            n["filter"] = "general";
            const Matrix& f = cfg.filter.filter();
            n["matrix"] = std::vector<double>(f.data(), f.data() + f.size());
        }
        nodes.push_back(std::move(n));
    }
    json comp = json::object();
    const auto& flags = spec.compositional_flags();
    for (std::size_t c = 0; c < flags.size(); ++c) {
        comp[std::to_string(c + 1)] = flags[c] == Compositionality::full ? "full" : "shared";
    }
    return json{{"nodes", nodes}, {"compositional", comp}}.dump(2);
}

} // namespace mmb
