#include "anat9/serialize.hpp"

#include <fstream>
#include <sstream>

namespace anat9 {

using nlohmann::json;

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec3_from_json(const json& j, const char* what) {
    require(j.is_array() && j.size() == 3, std::string(what) + " must be a 3-array");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> keys,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known |= (it.key() == k);
        require(known, "unknown key '" + it.key() + "' in " + where);
    }
}

}  // namespace

json to_json(const VolumeMeta& meta) {
    json j;
    j["dims"] = {meta.dims[0], meta.dims[1], meta.dims[2]};
    j["spacing_mm"] = vec3_to_json(meta.spacing);
    j["origin_mm"] = vec3_to_json(meta.origin);
    std::vector<double> dir(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) dir[static_cast<std::size_t>(3 * r + c)] = meta.direction(r, c);
    j["direction"] = dir;
    return j;
}

VolumeMeta meta_from_json(const json& j) {
    reject_unknown_keys(j, {"dims", "spacing_mm", "origin_mm", "direction"}, "image block");
    VolumeMeta meta;
    auto dims = j.at("dims");
    require(dims.is_array() && dims.size() == 3, "dims must be a 3-array");
    for (int k = 0; k < 3; ++k) meta.dims[k] = dims[k].get<int>();
    meta.spacing = vec3_from_json(j.at("spacing_mm"), "spacing_mm");
    meta.origin = vec3_from_json(j.at("origin_mm"), "origin_mm");
    auto dir = j.at("direction");
    require(dir.is_array() && dir.size() == 9, "direction must be a 9-array");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) meta.direction(r, c) = dir[static_cast<std::size_t>(3 * r + c)].get<double>();
    meta.validate();
    return meta;
}

json to_json(const BoxSet& set) {
    json j;
    j["image"] = to_json(set.image);
    j["boxes"] = json::array();
    for (const Pose9DoF& box : set.boxes) {
        json b;
        b["label"] = box.label;
        b["center_mm"] = vec3_to_json(box.center);
        b["scale_mm"] = vec3_to_json(box.scale);
        b["angles_deg"] = vec3_to_json(box.angles);
        j["boxes"].push_back(b);
    }
    return j;
}

BoxSet boxset_from_json(const json& j) {
    reject_unknown_keys(j, {"image", "boxes"}, "box set");
    BoxSet set;
    set.image = meta_from_json(j.at("image"));
    for (const json& b : j.at("boxes")) {
        reject_unknown_keys(b, {"label", "center_mm", "scale_mm", "angles_deg"}, "box");
        Pose9DoF box;
        box.label = b.at("label").get<int>();
        require(box.label >= 1, "box label must be >= 1");
        box.center = vec3_from_json(b.at("center_mm"), "center_mm");
        box.scale = vec3_from_json(b.at("scale_mm"), "scale_mm");
        require(box.scale.minCoeff() > 0, "box scale must be positive");
        box.angles = vec3_from_json(b.at("angles_deg"), "angles_deg");
        set.boxes.push_back(box);
    }
    return set;
}

BoxSet load_boxset(const std::filesystem::path& path) {
    return boxset_from_json(load_json_file(path));
}

void save_boxset(const BoxSet& set, const std::filesystem::path& path) {
    save_json_file(to_json(set), path);
}

json to_json(const QueryBank& bank) {
    json j;
    j["class_count"] = bank.class_count;
    j["final_binding"] = bank.final_binding;
    j["queries"] = json::array();
    for (const QueryParams& q : bank.queries) {
        json e;
        e["query_index"] = q.query_index;
        e["logits"] = q.logits;
        e["box"] = q.box;
        j["queries"].push_back(e);
    }
    return j;
}

QueryBank bank_from_json(const json& j) {
    reject_unknown_keys(j, {"class_count", "final_binding", "queries"}, "query bank");
    QueryBank bank;
    bank.class_count = j.at("class_count").get<int>();
    require(bank.class_count >= 1, "class count must be >= 1");
    bank.final_binding = j.at("final_binding").get<std::vector<int>>();
    for (const json& e : j.at("queries")) {
        reject_unknown_keys(e, {"query_index", "logits", "box"}, "query");
        QueryParams q;
        q.query_index = e.at("query_index").get<int>();
        q.logits = e.at("logits").get<std::vector<double>>();
        auto box = e.at("box").get<std::vector<double>>();
        require(box.size() == 9, "query box must have 9 parameters");
        require(q.logits.size() == static_cast<std::size_t>(bank.class_count) + 1,
                "query logits must have C+1 channels");
        std::copy(box.begin(), box.end(), q.box.begin());
        bank.queries.push_back(q);
    }
    require(bank.queries.size() == static_cast<std::size_t>(bank.class_count),
            "query bank must hold exactly C queries");
    for (std::size_t i = 0; i < bank.queries.size(); ++i)
        require(bank.queries[i].query_index == static_cast<int>(i) + 1,
                "queries must be ordered 1..C");
    return bank;
}

QueryBank load_bank(const std::filesystem::path& path) {
    return bank_from_json(load_json_file(path));
}

void save_bank(const QueryBank& bank, const std::filesystem::path& path) {
    save_json_file(to_json(bank), path);
}

json to_json(const LossBreakdown& loss) {
    json j;
    j["total"] = loss.total;
    j["classification"] = loss.classification;
    j["position"] = loss.position;
    j["scale"] = loss.scale;
    j["angle"] = loss.angle;
    j["clamped"] = loss.clamped;
    j["per_gt"] = json::array();
    for (const auto& t : loss.per_gt) {
        json e;
        e["gt_index"] = t.gt_index;
        e["gt_label"] = t.gt_label;
        e["query_index"] = t.query_index;
        e["classification"] = t.classification;
        e["position"] = t.position;
        e["scale"] = t.scale;
        e["angle"] = t.angle;
        j["per_gt"].push_back(e);
    }
    return j;
}

std::string train_log_csv(const TrainLog& log) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,total,classification,position,scale,angle,binding\n";
    for (const EpochRecord& e : log.epochs) {
        out << e.epoch << ',' << e.total << ',' << e.classification << ',' << e.position << ','
            << e.scale << ',' << e.angle << ",\"";
        for (std::size_t q = 0; q < e.binding.size(); ++q) {
            if (q) out << ' ';
            out << e.binding[q];
        }
        out << "\"\n";
    }
    return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << content;
    require(static_cast<bool>(out), "I/O failure writing " + path.string());
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("malformed JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

void save_json_file(const json& j, const std::filesystem::path& path) {
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace anat9
