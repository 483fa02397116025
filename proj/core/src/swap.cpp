#include "del/swap.hpp"

#include "del/errors.hpp"

#include <map>
#include <sstream>

namespace del {

std::vector<SwapEntry> parse_swap_map(const std::string& text) {
    std::vector<SwapEntry> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("swap entry '" + item + "' is not old=donor");
        try {
            std::size_t used_a = 0, used_b = 0;
            const std::string a = item.substr(0, eq), b = item.substr(eq + 1);
            SwapEntry e{std::stoi(a, &used_a), std::stoi(b, &used_b)};
            if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument(item);
            out.push_back(e);
        } catch (const std::logic_error&) {
            throw ConfigError("swap entry '" + item + "' needs integer material ids");
        }
    }
    if (out.empty()) throw ConfigError("empty swap map");
    return out;
}

namespace {

bool same_kernel(const LearnedModel& a, int ka, const LearnedModel& b, int kb) {
    for (const std::string& name : a.kernel_slice_names()) {
        if (a.params.view(LearnedModel::kernel_prefix(ka) + name) !=
            b.params.view(LearnedModel::kernel_prefix(kb) + name))
            return false;
    }
    return true;
}

/// Drops kernel sets no map refers to and renumbers the rest in order.
LearnedModel prune_kernel_sets(const LearnedModel& model) {
    // Kept sets are numbered in order of first use: embed_map, then pair_map row-major.
    std::vector<int> renumber(static_cast<std::size_t>(model.kernel_count), -1);
    std::vector<int> order;
    auto visit = [&](int k) {
        int& r = renumber[static_cast<std::size_t>(k)];
        if (r < 0) {
            r = static_cast<int>(order.size());
            order.push_back(k);
        }
    };
    for (int k : model.embed_map) visit(k);
    for (const auto& row : model.pair_map)
        for (int k : row) visit(k);
    bool identity = static_cast<int>(order.size()) == model.kernel_count;
    for (std::size_t r = 0; identity && r < order.size(); ++r) identity = order[r] == static_cast<int>(r);
    if (identity) return model;

    const std::string kernel = "kernel";
    auto set_of = [&](const std::string& name) {
        return name.starts_with(kernel) ? std::stoi(name.substr(kernel.size())) : -1;
    };
    LearnedModel out = model;
    out.params = ParamStore{};
    out.kernel_count = static_cast<int>(order.size());
    auto copy = [&](const SliceInfo& s, const std::string& name) {
        const std::size_t i = out.params.add(name, ad::Matrix(model.params.view(s.name)), s.trainable, s.decay);
        const auto n = static_cast<Eigen::Index>(s.size());
        const auto to = static_cast<Eigen::Index>(out.params.slice(i).offset);
        const auto from = static_cast<Eigen::Index>(s.offset);
        out.params.adam_m.segment(to, n) = model.params.adam_m.segment(from, n);
        out.params.adam_v.segment(to, n) = model.params.adam_v.segment(from, n);
    };
    for (const SliceInfo& s : model.params.slices())
        if (set_of(s.name) < 0) copy(s, s.name);
    for (std::size_t r = 0; r < order.size(); ++r)
        for (const SliceInfo& s : model.params.slices())
            if (set_of(s.name) == order[r])
                copy(s, LearnedModel::kernel_prefix(static_cast<int>(r)) + s.name.substr(s.name.find('/') + 1));
    out.params.adam_step = model.params.adam_step;
    for (int& k : out.embed_map) k = renumber[static_cast<std::size_t>(k)];
    for (auto& row : out.pair_map)
        for (int& k : row) k = renumber[static_cast<std::size_t>(k)];
    return out;
}

} // namespace

LearnedModel swap_material(const LearnedModel& model, const LearnedModel& donor,
                           const std::vector<SwapEntry>& mapping) {
    if (!(model.config == donor.config))
        throw ConfigError("donor checkpoint has a different kernel configuration");
    if (model.n_materials != donor.n_materials)
        throw ConfigError("donor checkpoint has a different material count");
    const int n = model.n_materials;
    std::map<int, int> to_donor;
    for (const SwapEntry& e : mapping) {
        if (e.target < 0 || e.target >= n || e.donor < 0 || e.donor >= n)
            throw ConfigError("swap names a material outside 0.." + std::to_string(n - 1));
        if (!to_donor.emplace(e.target, e.donor).second)
            throw ConfigError("material " + std::to_string(e.target) + " is swapped twice");
    }

    LearnedModel out = model;
    std::map<int, int> imported;
    auto import = [&](int kd) {
        if (const auto it = imported.find(kd); it != imported.end()) return it->second;
        int id = -1;
        for (int k = 0; k < out.kernel_count && id < 0; ++k)
            if (same_kernel(out, k, donor, kd)) id = k;
        if (id < 0) {
            id = out.kernel_count++;
            for (const std::string& name : donor.kernel_slice_names()) {
                const std::string from = LearnedModel::kernel_prefix(kd) + name;
                const SliceInfo& s = donor.params.slice(from);
                out.params.add(LearnedModel::kernel_prefix(id) + name, ad::Matrix(donor.params.view(from)),
                               s.trainable, s.decay);
            }
        }
        imported.emplace(kd, id);
        return id;
    };
    auto donor_of = [&](int m) {
        const auto it = to_donor.find(m);
        return it == to_donor.end() ? m : it->second;
    };

    auto templ = out.params.view("material/templates");
    auto radius = out.params.view("material/radius");
    const auto donor_templ = donor.params.view("material/templates");
    const auto donor_radius = donor.params.view("material/radius");
    for (const auto& [t, d] : to_donor) {
        templ.row(t) = donor_templ.row(d);
        radius(t, 0) = donor_radius(d, 0);
        out.embed_map[static_cast<std::size_t>(t)] = import(donor.embed_map[static_cast<std::size_t>(d)]);
    }
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (!to_donor.contains(a) && !to_donor.contains(b)) continue;
            out.pair_map[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                import(donor.pair_map[static_cast<std::size_t>(donor_of(a))][static_cast<std::size_t>(donor_of(b))]);
        }
    }
    out = prune_kernel_sets(out);
    out.params.zero_grad();
    out.validate();
    return out;
}

} // namespace del
