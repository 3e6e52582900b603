#include "sws/labels.hpp"

#include <cmath>
#include <cstdlib>

#include <nlohmann/json.hpp>

#include "sws/errors.hpp"
#include "sws/io.hpp"
#include "sws/scenegen.hpp"

namespace sws::labels {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {
constexpr std::uint16_t kLabelFormatVersion = 1;
}

int SRLabels::object_index(const std::string& id) const {
    if (object_ids.empty()) {
        if (id.size() > 1 && id[0] == 'o') {
            const int k = std::atoi(id.c_str() + 1);
            if (k >= 0 && k < n) return k;
        }
        return -1;
    }
    for (std::size_t i = 0; i < object_ids.size(); ++i)
        if (object_ids[i] == id) return static_cast<int>(i);
    return -1;
}

void SRLabels::validate() const {
    if (n < 1 || (dims != 2 && dims != 3)) throw CorruptLabels("bad label header");
    if (!object_ids.empty() && object_ids.size() != static_cast<std::size_t>(n))
        throw CorruptLabels("object id list does not match the object count");
    if (oce.size() != static_cast<std::size_t>(n) * dims ||
        rpe.size() != static_cast<std::size_t>(n) * n * dims)
        throw CorruptLabels("label tensor sizes do not match the header");
    for (const auto& [c, bins] : rpe_bins) {
        if (bins.size() != rpe.size()) throw CorruptLabels("bin tensor size mismatch");
        if (!bin_specs.count(c)) throw CorruptLabels("missing bin spec stamp for C=" + std::to_string(c));
    }
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < dims; ++d) {
            const float v = oce_at(i, d);
            if (!(v >= 0.0f && v <= 1.0f)) throw CorruptLabels("oce outside [0, 1]");
            if (rpe_at(i, i, d) != 0.0f) throw CorruptLabels("rpe diagonal is not zero");
        }
        for (int j = 0; j < n; ++j) {
            for (int d = 0; d < dims; ++d) {
                const float v = rpe_at(i, j, d);
                if (v != oce_at(i, d) - oce_at(j, d)) throw CorruptLabels("rpe != oce difference");
                if (v != -rpe_at(j, i, d)) throw CorruptLabels("rpe is not antisymmetric");
                for (const auto& [c, bins] : rpe_bins) {
                    const int q = geom::quantize(static_cast<double>(v), bin_specs.at(c));
                    if (bins[(static_cast<std::size_t>(i) * n + j) * dims + d] != q)
                        throw CorruptLabels("rpe_bins disagree with quantize(rpe)");
                }
            }
        }
    }
}

SRLabels build_labels(const std::string& scene_id, const std::vector<geom::BBox>& boxes,
                      const geom::DepthMap& map, int dims, const std::vector<int>& bin_counts,
                      std::vector<std::string> object_ids) {
    if (boxes.empty()) throw NoObjects("label build requires at least one box");
    if (dims != 2 && dims != 3) throw InvalidSpec("label dims must be 2 or 3");
    if (dims == 3 && !map.normalized) throw InvalidSpec("3D labels require a normalized depth map");
    if (!object_ids.empty() && object_ids.size() != boxes.size())
        throw InvalidSpec("object id list does not match the box count");

    SRLabels out;
    out.scene_id = scene_id;
    out.object_ids = std::move(object_ids);
    out.n = static_cast<int>(boxes.size());
    out.dims = dims;
    out.oce.resize(static_cast<std::size_t>(out.n) * dims);
    out.rpe.resize(static_cast<std::size_t>(out.n) * out.n * dims);

    for (int i = 0; i < out.n; ++i) {
        geom::Centroid c;
        try {
            c = dims == 3 ? geom::centroid_3d(boxes[static_cast<std::size_t>(i)], map)
                          : geom::centroid_2d(boxes[static_cast<std::size_t>(i)]);
        } catch (const EmptyBox& e) {
            throw EmptyBox("object " + std::to_string(i) + ": " + e.what());
        }
        for (int d = 0; d < dims; ++d)
            out.oce[static_cast<std::size_t>(i) * dims + d] = static_cast<float>(c[d]);
    }

    // Differences are taken on the rounded f32 centroids so the stored rpe
    // satisfies rpe[i][j] == oce[i] - oce[j] and rpe[i][j] == -rpe[j][i]
    // exactly after a file round-trip.
    for (int i = 0; i < out.n; ++i)
        for (int j = 0; j < out.n; ++j)
            for (int d = 0; d < dims; ++d)
                out.rpe[(static_cast<std::size_t>(i) * out.n + j) * dims + d] =
                    out.oce_at(i, d) - out.oce_at(j, d);

    for (int c_count : bin_counts) {
        const geom::BinSpec spec = geom::make_bin_spec(1.5, c_count);
        std::vector<std::uint16_t> bins(out.rpe.size());
        for (std::size_t idx = 0; idx < out.rpe.size(); ++idx)
            bins[idx] = static_cast<std::uint16_t>(geom::quantize(static_cast<double>(out.rpe[idx]), spec));
        out.rpe_bins[c_count] = std::move(bins);
        out.bin_specs[c_count] = spec;
    }
    return out;
}

void write_labels(const SRLabels& labels, const std::filesystem::path& path) {
    ordered_json header;
    header["scene_id"] = labels.scene_id;
    header["n"] = labels.n;
    header["dims"] = labels.dims;
    if (!labels.object_ids.empty()) header["object_ids"] = labels.object_ids;
    header["bin_specs"] = ordered_json::object();
    for (const auto& [c, spec] : labels.bin_specs)
        header["bin_specs"][std::to_string(c)] = ordered_json::parse(spec.to_json());
    header["bins"] = ordered_json::array();
    for (const auto& [c, _] : labels.rpe_bins) header["bins"].push_back(c);
    const std::string header_str = header.dump();

    io::Writer w;
    w.str("SRLB");
    w.u16(kLabelFormatVersion);
    w.u32(static_cast<std::uint32_t>(header_str.size()));
    w.str(header_str);
    for (float v : labels.oce) w.f32(v);
    for (float v : labels.rpe) w.f32(v);
    for (const auto& [c, bins] : labels.rpe_bins)
        for (std::uint16_t b : bins) w.u16(b);
    io::write_file(path, w.data());
}

SRLabels read_labels(const std::filesystem::path& path) {
    std::vector<char> buf;
    try {
        buf = io::read_file(path);
    } catch (const IoError& e) {
        throw CorruptLabels(e.what());
    }
    try {
        io::Reader r(buf);
        if (r.str(4) != "SRLB") throw CorruptLabels("not a label file: " + path.string());
        const std::uint16_t version = r.u16();
        if (version != kLabelFormatVersion)
            throw UnsupportedVersion("label format version " + std::to_string(version) +
                                     " is not supported");
        const std::uint32_t header_len = r.u32();
        const auto header = json::parse(r.str(header_len));

        SRLabels labels;
        labels.scene_id = header.at("scene_id").get<std::string>();
        labels.n = header.at("n").get<int>();
        labels.dims = header.at("dims").get<int>();
        if (header.contains("object_ids"))
            labels.object_ids = header.at("object_ids").get<std::vector<std::string>>();
        if (labels.n < 1 || (labels.dims != 2 && labels.dims != 3))
            throw CorruptLabels("bad label header in " + path.string());
        for (const auto& [key, value] : header.at("bin_specs").items())
            labels.bin_specs[std::stoi(key)] = geom::BinSpec::from_json(value.dump());

        const std::size_t cells = static_cast<std::size_t>(labels.n) * labels.dims;
        labels.oce.resize(cells);
        for (float& v : labels.oce) v = r.f32();
        labels.rpe.resize(cells * static_cast<std::size_t>(labels.n));
        for (float& v : labels.rpe) v = r.f32();
        for (const auto& jc : header.at("bins")) {
            const int c = jc.get<int>();
            std::vector<std::uint16_t> bins(labels.rpe.size());
            for (auto& b : bins) b = r.u16();
            labels.rpe_bins[c] = std::move(bins);
        }
        if (r.remaining() != 0) throw CorruptLabels("trailing bytes in " + path.string());
        labels.validate();
        return labels;
    } catch (const IoError&) {
        throw CorruptLabels("truncated label file: " + path.string());
    } catch (const json::exception&) {
        throw CorruptLabels("bad label header in " + path.string());
    }
}

double dataset_depth_max(const std::vector<std::filesystem::path>& depth_files) {
    if (depth_files.empty()) throw NoData("depth max requires at least one file");
    double best = -1.0;
    for (const auto& path : depth_files) {
        const geom::DepthMap map = scene::read_depth(path);
        for (float v : map.values) best = std::max(best, static_cast<double>(v));
    }
    return best;
}

}  // namespace sws::labels
