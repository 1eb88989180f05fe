#include "mmblock/model_io.hpp"

#include "mmblock/dten.hpp"
#include "mmblock/error.hpp"
#include "mmblock/hierarchy.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace mmb {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string put(const fs::path& dir, const std::string& name, const DenseTensor& t) {
    write_dten(dir / name, t);
    return name;
}

json put_optional_vector(const fs::path& dir, const std::string& name, const Vector& v) {
    if (v.size() == 0) return nullptr;
    return put(dir, name, to_tensor(v));
}

DenseTensor get(const fs::path& dir, const json& name) {
    const fs::path p = dir / name.get<std::string>();
    if (!fs::exists(p)) throw ConfigError("model file missing: " + p.string());
    return read_dten(p);
}

Vector get_optional_vector(const fs::path& dir, const json& name) {
    if (name.is_null()) return {};
    return to_vector(get(dir, name));
}

void write_manifest(const fs::path& dir, const json& manifest) {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ConfigError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

json flat_entries(const fs::path& dir, const FactorModel& model) {
    json modes = json::array(), sigmas = json::array();
    for (std::size_t m = 0; m < model.modes.size(); ++m) {
        const std::string tag = "mode" + std::to_string(m);
        modes.push_back(put(dir, tag + "_u.dten", to_tensor(model.modes[m])));
        sigmas.push_back(put_optional_vector(dir, tag + "_sigma.dten",
                                             m < model.sigmas.size() ? model.sigmas[m] : Vector()));
    }
    return {{"core", put(dir, "core.dten", model.core)},
            {"modes", modes},
            {"sigmas", sigmas},
            {"mean", put_optional_vector(dir, "mean.dten", model.mean)}};
}

} // namespace

void save_model(const fs::path& dir, const FactorModel& model) {
    fs::create_directories(dir);
    json manifest = flat_entries(dir, model);
    manifest["kind"] = "flat";
    manifest["version"] = kFormatVersion;
    write_manifest(dir, manifest);
}

void save_model(const fs::path& dir, const BlockFactorModel& model) {
    fs::create_directories(dir);
    json segments = json::array();
    for (std::size_t s = 0; s < model.segments.size(); ++s) {
        const auto& seg = model.segments[s];
        const std::string tag = "seg" + std::to_string(s) + "_";
        json modes = json::array(), sigmas = json::array();
        for (std::size_t m = 0; m < seg.modes.size(); ++m) {
            modes.push_back(put(dir, tag + "mode" + std::to_string(m) + "_u.dten", to_tensor(seg.modes[m])));
            sigmas.push_back(put_optional_vector(dir, tag + "mode" + std::to_string(m) + "_sigma.dten",
                                                 m < seg.sigmas.size() ? seg.sigmas[m] : Vector()));
        }
        segments.push_back({{"node", seg.node},
                            {"support", seg.support},
                            {"core", put(dir, tag + "core.dten", seg.core)},
                            {"modes", modes},
                            {"sigmas", sigmas}});
    }
    json comp = json::array();
    for (auto f : model.compositional) comp.push_back(f == Compositionality::shared ? "shared" : "full");
    json manifest{{"kind", "block"},
                  {"version", kFormatVersion},
                  {"data_shape", model.data_shape},
                  {"hierarchy", json::parse(hierarchy_to_json(model.hierarchy))},
                  {"compositional", comp},
                  {"segments", segments},
                  {"loss_trace", model.report.loss_trace}};
    if (model.lambdas.size() > 0) manifest["lambdas"] = put(dir, "lambdas.dten", to_tensor(model.lambdas));
    write_manifest(dir, manifest);
}

LoadedModel load_model(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw ConfigError("model manifest not found: " + path.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("invalid model manifest: " + std::string(e.what()));
    }

    LoadedModel out;
    try {
        if (manifest.at("version").get<int>() != kFormatVersion) throw ConfigError("unsupported model version");
        const auto kind = manifest.at("kind").get<std::string>();
        if (kind == "flat") {
            FactorModel m;
            m.core = get(dir, manifest.at("core"));
            for (const auto& name : manifest.at("modes")) m.modes.push_back(to_matrix(get(dir, name)));
            for (const auto& name : manifest.at("sigmas")) m.sigmas.push_back(get_optional_vector(dir, name));
            m.mean = get_optional_vector(dir, manifest.at("mean"));
            out.flat = std::move(m);
        } else if (kind == "block") {
            BlockFactorModel m;
            m.data_shape = manifest.at("data_shape").get<Shape>();
            if (m.data_shape.empty()) throw ConfigError("block model without a data shape");
            m.hierarchy = hierarchy_from_json(manifest.at("hierarchy").dump(), m.data_shape[0]);
            for (const auto& f : manifest.at("compositional"))
                m.compositional.push_back(f.get<std::string>() == "shared" ? Compositionality::shared
                                                                           : Compositionality::full);
            for (const auto& s : manifest.at("segments")) {
                BlockSegment seg;
                seg.node = s.at("node").get<std::size_t>();
                seg.support = s.at("support").get<std::vector<std::size_t>>();
                seg.core = get(dir, s.at("core"));
                for (const auto& name : s.at("modes")) seg.modes.push_back(to_matrix(get(dir, name)));
                for (const auto& name : s.at("sigmas")) seg.sigmas.push_back(get_optional_vector(dir, name));
                m.segments.push_back(std::move(seg));
            }
            if (manifest.contains("lambdas")) m.lambdas = to_matrix(get(dir, manifest.at("lambdas")));
            m.report.loss_trace = manifest.value("loss_trace", std::vector<double>{});
            out.block = std::move(m);
        } else {
            throw ConfigError("unknown model kind \"" + kind + "\"");
        }
    } catch (const json::exception& e) {
        throw ConfigError("malformed model manifest: " + std::string(e.what()));
    }
    return out;
}

} // namespace mmb
