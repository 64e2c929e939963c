#include "flowcast/dataset.hpp"

#include "flowcast/binio.hpp"

#include <nlohmann/json.hpp>

namespace flowcast {

std::vector<std::string> Manifest::all_ids() const {
    std::vector<std::string> out = train;
    out.insert(out.end(), valid.begin(), valid.end());
    out.insert(out.end(), test.begin(), test.end());
    return out;
}

const std::vector<std::string>& Manifest::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw DataError("unknown split: " + name + " (expected train, valid or test)");
}

void save_manifest(const Manifest& manifest, const std::string& dir) {
    nlohmann::json j{{"version", manifest.version},
                     {"split",
                      {{"train", manifest.train}, {"valid", manifest.valid}, {"test", manifest.test}}},
                     {"pressure_channels", manifest.pressure_channels}};
    auto os = open_out(dir + "/manifest.json");
    os << j.dump(2) << "\n";
}

Manifest load_manifest(const std::string& dir) {
    auto is = open_in(dir + "/manifest.json");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(dir + "/manifest.json: " + e.what());
    }
    Manifest m;
    m.version = j.at("version").get<uint32_t>();
    m.train = j.at("split").at("train").get<std::vector<std::string>>();
    m.valid = j.at("split").at("valid").get<std::vector<std::string>>();
    m.test = j.at("split").at("test").get<std::vector<std::string>>();
    m.pressure_channels = j.at("pressure_channels").get<uint32_t>();
    return m;
}

std::string trajectory_path(const std::string& dir, const std::string& id) {
    return dir + "/" + id + ".bin";
}

std::string stats_path(const std::string& dir) { return dir + "/stats.json"; }

LoadedSplit load_split(const std::string& dir, const std::vector<std::string>& ids,
                       bool with_clusters, uint32_t cluster_size, uint64_t cluster_seed) {
    LoadedSplit out;
    out.ids = ids;
    for (const auto& id : ids) {
        const auto path = trajectory_path(dir, id);
        out.trajectories.push_back(load_trajectory(path));
        if (with_clusters) {
            const auto cache = cluster_cache_path(path, cluster_size, cluster_seed);
            out.clusters.push_back(load_cluster_cache(cache, cluster_size));
            if (out.clusters.back().size() != out.trajectories.back().frames.size())
                throw DataError(cache + ": covers " + std::to_string(out.clusters.back().size()) +
                                " frames but trajectory has " +
                                std::to_string(out.trajectories.back().frames.size()));
        }
    }
    return out;
}

}  // namespace flowcast
