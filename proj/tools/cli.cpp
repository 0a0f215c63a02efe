#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "anat9/augment.hpp"
#include "anat9/matching.hpp"
#include "anat9/metrics.hpp"
#include "anat9/serialize.hpp"
#include "anat9/synth.hpp"
#include "anat9/toydetect.hpp"

namespace anat9 {

namespace {

using nlohmann::json;

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("ANAT9_LOG");
    if (!env) return LogLevel::info;
    std::string v(env);
    if (v == "quiet") return LogLevel::quiet;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::cerr << "[anat9] " << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) std::cerr << "[anat9:debug] " << msg << "\n";
}

// ---------------------------------------------------------------------------
// Config file: one JSON object with per-command blocks, unknown keys rejected.
// Defaults follow the published constants.
// ---------------------------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known |= (it.key() == k);
        require(known, "unknown key '" + it.key() + "' in config block '" + where + "'");
    }
}

CostCoeffs coeffs_from_config(const json& root) {
    CostCoeffs c;
    if (!root.contains("coeffs")) return c;
    const json& j = root.at("coeffs");
    check_keys(j, {"lambda_c", "lambda_p", "lambda_s", "lambda_a", "lambda_m"}, "coeffs");
    c.lambda_c = j.value("lambda_c", c.lambda_c);
    c.lambda_p = j.value("lambda_p", c.lambda_p);
    c.lambda_s = j.value("lambda_s", c.lambda_s);
    c.lambda_a = j.value("lambda_a", c.lambda_a);
    c.lambda_m = j.value("lambda_m", c.lambda_m);
    c.validate();
    return c;
}

json coeffs_to_json(const CostCoeffs& c) {
    return json{{"lambda_c", c.lambda_c},
                {"lambda_p", c.lambda_p},
                {"lambda_s", c.lambda_s},
                {"lambda_a", c.lambda_a},
                {"lambda_m", c.lambda_m}};
}

IdThresholds thresholds_from_config(const json& root) {
    IdThresholds t;
    if (!root.contains("thresholds")) return t;
    const json& j = root.at("thresholds");
    check_keys(j, {"position_mm", "scale_mm", "angle_deg"}, "thresholds");
    t.position_mm = j.value("position_mm", t.position_mm);
    t.scale_mm = j.value("scale_mm", t.scale_mm);
    t.angle_deg = j.value("angle_deg", t.angle_deg);
    t.validate();
    return t;
}

json thresholds_to_json(const IdThresholds& t) {
    return json{{"position_mm", t.position_mm}, {"scale_mm", t.scale_mm}, {"angle_deg", t.angle_deg}};
}

SceneConfig scene_from_config(const json& root, std::uint64_t seed) {
    SceneConfig s;
    s.seed = seed;
    if (!root.contains("scene")) return s;
    const json& j = root.at("scene");
    check_keys(j,
               {"instance_count", "layout", "dims", "spacing_mm", "translation_jitter_mm",
                "scale_jitter_fraction", "rotation_jitter_deg", "curvature"},
               "scene");
    s.instance_count = j.value("instance_count", s.instance_count);
    if (j.contains("layout")) {
        std::string layout = j.at("layout").get<std::string>();
        require(layout == "ladder" || layout == "stack", "scene.layout must be ladder or stack");
        s.layout = layout == "ladder" ? SceneLayout::ladder : SceneLayout::stack;
    }
    if (j.contains("dims")) {
        auto d = j.at("dims");
        require(d.is_array() && d.size() == 3, "scene.dims must be a 3-array");
        for (int k = 0; k < 3; ++k) s.dims[static_cast<std::size_t>(k)] = d[static_cast<std::size_t>(k)].get<int>();
    }
    if (j.contains("spacing_mm")) {
        auto sp = j.at("spacing_mm");
        require(sp.is_array() && sp.size() == 3, "scene.spacing_mm must be a 3-array");
        for (int k = 0; k < 3; ++k) s.spacing[k] = sp[static_cast<std::size_t>(k)].get<double>();
    }
    s.translation_jitter_mm = j.value("translation_jitter_mm", s.translation_jitter_mm);
    s.scale_jitter_fraction = j.value("scale_jitter_fraction", s.scale_jitter_fraction);
    s.rotation_jitter_deg = j.value("rotation_jitter_deg", s.rotation_jitter_deg);
    s.curvature = j.value("curvature", s.curvature);
    s.validate();
    return s;
}

json scene_to_json(const SceneConfig& s) {
    return json{{"instance_count", s.instance_count},
                {"layout", s.layout == SceneLayout::ladder ? "ladder" : "stack"},
                {"dims", {s.dims[0], s.dims[1], s.dims[2]}},
                {"spacing_mm", {s.spacing[0], s.spacing[1], s.spacing[2]}},
                {"translation_jitter_mm", s.translation_jitter_mm},
                {"scale_jitter_fraction", s.scale_jitter_fraction},
                {"rotation_jitter_deg", s.rotation_jitter_deg},
                {"curvature", s.curvature}};
}

AugmentConfig augment_from_config(const json& root, std::uint64_t seed) {
    AugmentConfig a;
    a.seed = seed;
    if (!root.contains("augment")) return a;
    const json& j = root.at("augment");
    check_keys(j, {"max_translation_mm", "scale_range", "rotation_range_deg", "erase_probability"},
               "augment");
    a.max_translation_mm = j.value("max_translation_mm", a.max_translation_mm);
    if (j.contains("scale_range")) {
        auto r = j.at("scale_range");
        require(r.is_array() && r.size() == 2, "augment.scale_range must be a 2-array");
        a.scale_range = {r[0].get<double>(), r[1].get<double>()};
    }
    if (j.contains("rotation_range_deg")) {
        auto r = j.at("rotation_range_deg");
        require(r.is_array() && r.size() == 2, "augment.rotation_range_deg must be a 2-array");
        a.rotation_range_deg = {r[0].get<double>(), r[1].get<double>()};
    }
    a.erase_probability = j.value("erase_probability", a.erase_probability);
    a.validate();
    return a;
}

json augment_to_json(const AugmentConfig& a) {
    return json{{"max_translation_mm", a.max_translation_mm},
                {"scale_range", {a.scale_range[0], a.scale_range[1]}},
                {"rotation_range_deg", {a.rotation_range_deg[0], a.rotation_range_deg[1]}},
                {"erase_probability", a.erase_probability}};
}

struct TrainBlock {
    int epochs = 2000;
    double learning_rate = 0.05;
    double init_sigma = 0.005;
    int scene_count = 3;
    std::uint64_t scene_seed = 101;
    std::string background_norm = "per_gt";
};

TrainBlock train_from_config(const json& root) {
    TrainBlock t;
    if (!root.contains("train")) return t;
    const json& j = root.at("train");
    check_keys(j, {"epochs", "learning_rate", "init_sigma", "scene_count", "scene_seed",
                   "background_norm"},
               "train");
    t.epochs = j.value("epochs", t.epochs);
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.init_sigma = j.value("init_sigma", t.init_sigma);
    t.scene_count = j.value("scene_count", t.scene_count);
    t.scene_seed = j.value("scene_seed", t.scene_seed);
    t.background_norm = j.value("background_norm", t.background_norm);
    require(t.background_norm == "per_gt" || t.background_norm == "per_query",
            "train.background_norm must be per_gt or per_query");
    require(t.epochs >= 1 && t.learning_rate > 0 && t.scene_count >= 1, "invalid train block");
    return t;
}

json train_to_json(const TrainBlock& t) {
    return json{{"epochs", t.epochs},           {"learning_rate", t.learning_rate},
                {"init_sigma", t.init_sigma},   {"scene_count", t.scene_count},
                {"scene_seed", t.scene_seed},   {"background_norm", t.background_norm}};
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    json root = load_json_file(path);
    check_keys(root, {"coeffs", "thresholds", "scene", "augment", "train"}, "<root>");
    // Parse every present block so malformed config fails whichever command
    // received it, not just the one that would have used the block.
    coeffs_from_config(root);
    thresholds_from_config(root);
    scene_from_config(root, 0);
    augment_from_config(root, 0);
    train_from_config(root);
    return root;
}

// Common flags shared by every subcommand.
struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--seed", args.seed, "seed for all randomness in this command");
    cmd->add_option("--jobs", args.jobs, "worker threads for per-instance work")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", args.out_dir, "output directory");
}

std::filesystem::path ensure_out_dir(const CommonArgs& args) {
    std::filesystem::path dir(args.out_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::set<int> parse_labels(const std::string& csv) {
    std::set<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        require(!item.empty(), "empty entry in label list");
        out.insert(std::stoi(item));
    }
    require(!out.empty(), "label list is empty");
    return out;
}

std::vector<Scene> build_dataset(const json& config, const TrainBlock& train) {
    std::vector<Scene> dataset;
    for (int s = 0; s < train.scene_count; ++s) {
        SceneConfig sc = scene_from_config(config, train.scene_seed + static_cast<std::uint64_t>(s));
        dataset.push_back(gen_scene(sc));
    }
    return dataset;
}

TrainConfig build_train_config(const json& config, const TrainBlock& train, std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = train.epochs;
    tc.learning_rate = train.learning_rate;
    tc.init_sigma = train.init_sigma;
    tc.coeffs = coeffs_from_config(config);
    tc.loss_options.background_norm =
        train.background_norm == "per_gt" ? BackgroundNorm::per_gt : BackgroundNorm::per_query;
    tc.dataset = build_dataset(config, train);
    tc.seed = seed;
    return tc;
}

// Every report embeds the resolved configuration for provenance.
json provenance(const CommonArgs& args, json resolved) {
    resolved["seed"] = args.seed;
    return resolved;
}

// The nine-column instance CSV shared by the evaluate commands.
std::string report_csv_header() { return "case,label,identified,dP,dS,dA,dsc,hd95,assd\n"; }

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int run_synth(const CommonArgs& args) {
    json config = load_config(args.config_path);
    SceneConfig sc = scene_from_config(config, args.seed);
    Scene scene = gen_scene(sc);
    auto dir = ensure_out_dir(args);

    save_volume(scene.labels, dir / "scene.json");
    BoxSet boxes{scene.labels.meta, scene.gt_poses};
    save_boxset(boxes, dir / "boxes.json");

    json report;
    report["config"] = provenance(args, json{{"scene", scene_to_json(sc)}});
    report["labels"] = scene.labels.labels_present().size();
    save_json_file(report, dir / "synth_report.json");
    log_info("wrote scene.json, boxes.json to " + dir.string());
    return 0;
}

int run_parameterize(const CommonArgs& args, const std::string& in_path) {
    LabelVolume volume = load_label_volume(in_path);
    BoxSet set;
    set.image = volume.meta;
    for (std::uint16_t label : volume.labels_present())
        set.boxes.push_back(pca_parameterize(volume, label));
    auto dir = ensure_out_dir(args);
    save_boxset(set, dir / "boxes.json");
    log_info("parameterized " + std::to_string(set.boxes.size()) + " instances");
    return 0;
}

int run_augment(const CommonArgs& args, const std::string& in_path, const std::string& boxes_path,
                const std::string& crop_spec) {
    json config = load_config(args.config_path);
    AugmentConfig ac = augment_from_config(config, args.seed);
    LabelVolume volume = load_label_volume(in_path);
    BoxSet boxes = load_boxset(boxes_path);
    require(volume.meta.same_grid(boxes.image, 1e-6),
            "volume grid and box-set image block disagree");

    std::vector<Pose9DoF> poses = boxes.boxes;
    json applied = json::array();

    if (!crop_spec.empty()) {
        auto colon = crop_spec.find(':');
        require(colon != std::string::npos, "--crop-z expects z0:z1");
        int z0 = std::stoi(crop_spec.substr(0, colon));
        int z1 = std::stoi(crop_spec.substr(colon + 1));
        AugmentedScene cropped = crop_z(volume, poses, z0, z1);
        volume = std::move(cropped.volume);
        poses = std::move(cropped.poses);
        applied.push_back(json{{"crop_z", {z0, z1}}});
    }

    RigidDraw draw = draw_rigid(ac, 0);
    AugmentedScene rigid = rigid_augment(volume, poses, ac, draw);
    applied.push_back(json{{"rigid",
                            {{"translation_mm", {draw.translation_mm[0], draw.translation_mm[1],
                                                 draw.translation_mm[2]}},
                             {"scale", draw.scale},
                             {"rotation_deg", {draw.rotation_deg[0], draw.rotation_deg[1],
                                               draw.rotation_deg[2]}}}}});

    AugmentedScene erased =
        random_erase_bottom_pair(rigid.volume, rigid.poses, ac.erase_probability, ac.seed, 0);
    if (!erased.warning.empty()) log_info(erased.warning);
    applied.push_back(json{{"erase", erased.poses.size() != rigid.poses.size()}});

    auto dir = ensure_out_dir(args);
    save_volume(erased.volume, dir / "augmented.json");
    BoxSet out{erased.volume.meta, erased.poses};
    save_boxset(out, dir / "augmented_boxes.json");

    json report;
    report["config"] = provenance(args, json{{"augment", augment_to_json(ac)}});
    report["applied"] = applied;
    report["instances"] = erased.poses.size();
    save_json_file(report, dir / "augment_report.json");
    return 0;
}

// Boxes become matching inputs: probability one on the carried label, query
// index equal to the label, target normalized to the shared image grid.
std::vector<Prediction> predictions_from_boxset(const BoxSet& set, int class_count) {
    std::vector<Prediction> out;
    for (const Pose9DoF& box : set.boxes) {
        Prediction p;
        p.query_index = box.label;
        p.class_probs.assign(static_cast<std::size_t>(class_count) + 1, 0.0);
        require(box.label <= class_count, "box label exceeds the class count");
        p.class_probs[static_cast<std::size_t>(box.label)] = 1.0;
        p.target = normalize_target(box, set.image);
        out.push_back(p);
    }
    return out;
}

int run_match(const CommonArgs& args, const std::string& pred_path, const std::string& gt_path,
              std::optional<double> lambda_m, const std::string& dump_cost) {
    json config = load_config(args.config_path);
    CostCoeffs coeffs = coeffs_from_config(config);
    if (lambda_m) coeffs.lambda_m = *lambda_m;
    coeffs.validate();

    BoxSet pred = load_boxset(pred_path);
    BoxSet gt = load_boxset(gt_path);
    require(pred.image.same_grid(gt.image, 1e-6),
            "prediction and ground-truth box sets must share one image grid");

    int class_count = 0;
    for (const Pose9DoF& b : gt.boxes) class_count = std::max(class_count, b.label);
    for (const Pose9DoF& b : pred.boxes) class_count = std::max(class_count, b.label);
    require(class_count >= 1, "no boxes to match");

    std::vector<Prediction> preds = predictions_from_boxset(pred, class_count);
    std::vector<GroundTruth> gts;
    for (const Pose9DoF& box : gt.boxes)
        gts.push_back({box.label, normalize_target(box, gt.image)});

    IndexCostMatrix m = build_index_cost(class_count);
    if (!dump_cost.empty()) {
        std::ostringstream csv;
        csv.precision(17);
        for (std::size_t i = 0; i < gts.size(); ++i) {
            for (std::size_t j = 0; j < preds.size(); ++j) {
                if (j) csv << ',';
                csv << pair_cost(preds[j], gts[i], coeffs, m);
            }
            csv << '\n';
        }
        write_text_file(dump_cost, csv.str());
        log_debug("wrote pair-cost matrix to " + dump_cost);
    }

    MatchAssignment assignment = match(preds, gts, coeffs, m);
    LossBreakdown loss = set_loss(preds, gts, assignment, coeffs);

    json report;
    report["config"] = provenance(args, json{{"coeffs", coeffs_to_json(coeffs)}});
    report["total_cost"] = assignment.total_cost;
    report["loss"] = to_json(loss);
    report["pairs"] = json::array();
    for (std::size_t i = 0; i < gts.size(); ++i)
        report["pairs"].push_back(
            json{{"gt_label", gts[i].label},
                 {"query_index", assignment.gt_to_query[i]},
                 {"pred_label",
                  pred.boxes[static_cast<std::size_t>(assignment.gt_to_pred[i])].label}});
    auto dir = ensure_out_dir(args);
    save_json_file(report, dir / "match.json");
    return 0;
}

int run_evaluate_det(const CommonArgs& args, const std::string& gt_path,
                     const std::string& pred_path, const std::string& case_id) {
    json config = load_config(args.config_path);
    IdThresholds thresholds = thresholds_from_config(config);
    BoxSet gt = load_boxset(gt_path);
    BoxSet pred = load_boxset(pred_path);
    DetectionReport report = identify(pred.boxes, gt.boxes, thresholds);

    json out;
    out["config"] = provenance(args, json{{"thresholds", thresholds_to_json(thresholds)}});
    out["angle_difference"] = "wrapped";
    out["n_gt"] = report.n_gt;
    out["n_pred"] = report.n_pred;
    out["n_identified"] = report.n_identified;
    out["id_rate"] = report.id_rate;
    out["p_mean_mm"] = report.p_mean_mm;
    out["s_mean_mm"] = report.s_mean_mm;
    out["a_mean_deg"] = report.a_mean_deg;
    out["per_gt"] = json::array();
    std::ostringstream csv;
    csv << report_csv_header();
    for (const auto& row : report.per_gt) {
        out["per_gt"].push_back(json{{"label", row.label},
                                     {"identified", row.identified},
                                     {"position_dev_mm", row.position_dev_mm},
                                     {"scale_dev_mm", row.scale_dev_mm},
                                     {"angle_dev_deg", row.angle_dev_deg}});
        csv << case_id << ',' << row.label << ',' << (row.identified ? 1 : 0) << ','
            << fmt(row.position_dev_mm) << ',' << fmt(row.scale_dev_mm) << ','
            << fmt(row.angle_dev_deg) << ",,,\n";
    }
    auto dir = ensure_out_dir(args);
    save_json_file(out, dir / "detection_report.json");
    write_text_file(dir / "detection_report.csv", csv.str());
    std::cout << "Id.Rate " << report.id_rate << " (" << report.n_identified << "/" << report.n_gt
              << ")\n";
    return 0;
}

int run_evaluate_seg(const CommonArgs& args, const std::string& gt_path,
                     const std::string& pred_path, const std::string& case_id) {
    LabelVolume gt = load_label_volume(gt_path);
    LabelVolume pred = load_label_volume(pred_path);
    SegReport report = evaluate_segmentation(gt, pred, args.jobs);

    json out;
    out["config"] = provenance(args, json::object());
    out["dsc_mean"] = report.dsc_mean;
    out["hd95_mean_mm"] = report.hd95_mean_mm;
    out["hd_mean_mm"] = report.hd_mean_mm;
    out["assd_mean_mm"] = report.assd_mean_mm;
    out["missing_labels"] = report.missing_labels;
    out["per_instance"] = json::array();
    std::ostringstream csv;
    csv << report_csv_header();
    for (const auto& row : report.per_instance) {
        json r{{"label", row.label},
               {"dsc", row.dsc},
               {"gt_voxels", row.gt_voxels},
               {"pred_voxels", row.pred_voxels}};
        r["hd95_mm"] = row.hd95_mm ? json(*row.hd95_mm) : json();
        r["assd_mm"] = row.assd_mm ? json(*row.assd_mm) : json();
        out["per_instance"].push_back(r);
        csv << case_id << ',' << row.label << ",,,,," << fmt(row.dsc) << ','
            << (row.hd95_mm ? fmt(*row.hd95_mm) : "") << ','
            << (row.assd_mm ? fmt(*row.assd_mm) : "") << "\n";
    }
    auto dir = ensure_out_dir(args);
    save_json_file(out, dir / "segmentation_report.json");
    write_text_file(dir / "segmentation_report.csv", csv.str());
    std::cout << "DSC " << report.dsc_mean << " HD95 " << report.hd95_mean_mm << " ASSD "
              << report.assd_mean_mm << "\n";
    return 0;
}

int run_crop(const CommonArgs& args, const std::string& in_path, const std::string& boxes_path,
             int label, double expansion, const std::string& dims_spec, const std::string& mode) {
    LabelVolume volume = load_label_volume(in_path);
    BoxSet boxes = load_boxset(boxes_path);
    const Pose9DoF* pose = nullptr;
    for (const Pose9DoF& b : boxes.boxes)
        if (b.label == label) pose = &b;
    require(pose != nullptr, "label " + std::to_string(label) + " not present in box set");

    std::array<int, 3> out_dims{};
    if (dims_spec.empty()) {
        // Native resolution: one output voxel per input voxel of box extent.
        for (int k = 0; k < 3; ++k)
            out_dims[static_cast<std::size_t>(k)] = std::max(
                1, static_cast<int>(std::lround((pose->scale[k] + 2 * expansion) /
                                                volume.meta.spacing[k])));
    } else {
        std::stringstream ss(dims_spec);
        std::string item;
        for (int k = 0; k < 3; ++k) {
            require(static_cast<bool>(std::getline(ss, item, ',')), "--dims expects x,y,z");
            out_dims[static_cast<std::size_t>(k)] = std::stoi(item);
        }
    }
    require(mode == "nearest" || mode == "trilinear", "--mode must be nearest or trilinear");
    require(mode == "nearest", "trilinear sampling is not valid on a label volume");

    LabelVolume crop = crop_resample(volume, *pose, expansion, out_dims, SampleMode::nearest);
    // Binary instance mask, per the segmentation-head contract.
    for (auto& cell : crop.voxels) cell = (cell == label) ? 1 : 0;
    auto dir = ensure_out_dir(args);
    save_volume(crop, dir / ("crop_" + std::to_string(label) + ".json"));
    return 0;
}

int run_merge(const CommonArgs& args, const std::string& like_path,
              const std::vector<std::string>& inputs, const std::string& labels_csv) {
    LabelVolume reference = load_label_volume(like_path);
    std::set<int> labels = parse_labels(labels_csv);
    require(labels.size() == inputs.size(), "--labels must list one label per input");

    std::vector<SubMask> parts;
    auto label_it = labels.begin();
    for (const std::string& path : inputs) {
        SubMask part;
        part.mask = load_label_volume(path);
        part.label = static_cast<std::uint16_t>(*label_it++);
        parts.push_back(std::move(part));
    }
    LabelVolume merged = merge_back(parts, reference.meta);
    auto dir = ensure_out_dir(args);
    save_volume(merged, dir / "merged.json");
    return 0;
}

int run_train_toy(const CommonArgs& args) {
    json config = load_config(args.config_path);
    TrainBlock train = train_from_config(config);
    TrainConfig tc = build_train_config(config, train, args.seed);
    TrainResult result = train_toy(tc);

    auto dir = ensure_out_dir(args);
    save_bank(result.bank, dir / "bank.json");
    write_text_file(dir / "train_log.csv", train_log_csv(result.log));
    // The inference grid travels with the bank.
    save_json_file(to_json(tc.dataset.front().labels.meta), dir / "bank_meta.json");

    json report;
    report["config"] = provenance(
        args, json{{"coeffs", coeffs_to_json(tc.coeffs)},
                   {"train", train_to_json(train)},
                   {"scene", scene_to_json(scene_from_config(config, train.scene_seed))}});
    report["diverged"] = result.log.diverged;
    report["final_loss"] = result.log.epochs.back().total;
    report["identity_bound"] = result.bank.identity_bound();
    save_json_file(report, dir / "train_report.json");

    if (result.log.diverged) {
        std::cerr << "training diverged (non-finite loss); log written\n";
        return 2;
    }
    log_info("final binding identity: " + std::string(result.bank.identity_bound() ? "yes" : "no"));
    return 0;
}

int run_infer_toy(const CommonArgs& args, const std::string& bank_path,
                  const std::string& meta_path, const std::string& labels_csv) {
    QueryBank bank = load_bank(bank_path);
    VolumeMeta meta = meta_from_json(load_json_file(meta_path));
    std::set<int> labels;
    if (labels_csv.empty()) {
        for (int c = 1; c <= bank.class_count; ++c) labels.insert(c);
    } else {
        labels = parse_labels(labels_csv);
    }
    SteerResult result = steerable_infer(bank, labels, meta);

    BoxSet out;
    out.image = meta;
    out.boxes = result.boxes;
    auto dir = ensure_out_dir(args);
    save_boxset(out, dir / "inferred_boxes.json");

    json report;
    report["config"] = provenance(args, json::object());
    report["requested"] = std::vector<int>(labels.begin(), labels.end());
    report["decoded_queries"] = result.decoded_queries;
    save_json_file(report, dir / "infer_report.json");
    std::cout << "decoded " << result.decoded_queries << " queries\n";
    return 0;
}

int run_ablate(const CommonArgs& args, const std::string& lambdas_csv, int seeds) {
    json config = load_config(args.config_path);
    TrainBlock train = train_from_config(config);

    std::vector<double> lambdas;
    {
        std::stringstream ss(lambdas_csv);
        std::string item;
        while (std::getline(ss, item, ',')) lambdas.push_back(std::stod(item));
    }
    require(!lambdas.empty(), "no lambda_m values given");
    require(seeds >= 1, "--seeds must be >= 1");

    std::vector<Scene> dataset = build_dataset(config, train);

    std::ostringstream csv;
    csv.precision(17);
    csv << "lambda_m,mean_displacement,identity_fraction,mean_final_loss\n";
    json rows = json::array();
    for (double lm : lambdas) {
        double disp_sum = 0.0, loss_sum = 0.0;
        int identity_runs = 0;
        for (int s = 0; s < seeds; ++s) {
            TrainConfig tc =
                build_train_config(config, train, args.seed + static_cast<std::uint64_t>(s));
            tc.dataset = dataset;
            tc.coeffs.lambda_m = lm;
            TrainResult r = train_toy(tc);
            require(!r.log.diverged, "training diverged during the sweep");
            int disp = 0;
            for (std::size_t q = 0; q < r.bank.final_binding.size(); ++q)
                disp += std::abs(r.bank.final_binding[q] - static_cast<int>(q) - 1);
            disp_sum += disp;
            loss_sum += r.log.epochs.back().total;
            identity_runs += r.bank.identity_bound();
        }
        double mean_disp = disp_sum / seeds;
        csv << lm << ',' << mean_disp << ',' << static_cast<double>(identity_runs) / seeds << ','
            << loss_sum / seeds << '\n';
        rows.push_back(json{{"lambda_m", lm},
                            {"mean_displacement", mean_disp},
                            {"identity_fraction", static_cast<double>(identity_runs) / seeds}});
        log_info("lambda_m=" + std::to_string(lm) +
                 " mean displacement=" + std::to_string(mean_disp));
    }

    auto dir = ensure_out_dir(args);
    write_text_file(dir / "lambda_m_sweep.csv", csv.str());
    json report;
    report["config"] =
        provenance(args, json{{"coeffs", coeffs_to_json(coeffs_from_config(config))},
                              {"train", train_to_json(train)},
                              {"seeds", seeds}});
    report["sweep"] = rows;
    save_json_file(report, dir / "ablate_report.json");
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"9-DoF anatomy parsing toolkit: oriented boxes, index-cost matching, "
                 "set-prediction loss, metrics, synthetic scenes, steerable toy detector"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled scene");
    add_common(synth, args);

    std::string in_path, boxes_path;
    auto* parameterize =
        app.add_subcommand("parameterize", "fit 9-DoF boxes to a label volume by PCA");
    add_common(parameterize, args);
    parameterize->add_option("--in", in_path, "label volume (.json container or .nii)")
        ->required();

    std::string crop_spec;
    auto* augment = app.add_subcommand("augment", "apply seeded augmentations with box updates");
    add_common(augment, args);
    augment->add_option("--in", in_path, "label volume")->required();
    augment->add_option("--boxes", boxes_path, "box-set JSON")->required();
    augment->add_option("--crop-z", crop_spec, "offline z-crop slab z0:z1");

    std::string gt_path, pred_path, dump_cost;
    double lambda_m_flag = -1.0;
    auto* match_cmd = app.add_subcommand("match", "Hungarian matching between two box sets");
    add_common(match_cmd, args);
    match_cmd->add_option("--pred", pred_path, "predicted box-set JSON")->required();
    match_cmd->add_option("--gt", gt_path, "ground-truth box-set JSON")->required();
    match_cmd->add_option("--lambda-m", lambda_m_flag, "override the index-cost weight");
    match_cmd->add_option("--dump-cost", dump_cost, "write the pair-cost matrix as CSV");

    std::string case_id = "case";
    auto* eval_det = app.add_subcommand("evaluate-det", "identification rate and deviations");
    add_common(eval_det, args);
    eval_det->add_option("--gt", gt_path, "ground-truth box-set JSON")->required();
    eval_det->add_option("--pred", pred_path, "predicted box-set JSON")->required();
    eval_det->add_option("--case", case_id, "case id for the CSV");

    auto* eval_seg = app.add_subcommand("evaluate-seg", "DSC/HD95/ASSD per instance");
    add_common(eval_seg, args);
    eval_seg->add_option("--gt", gt_path, "ground-truth label volume")->required();
    eval_seg->add_option("--pred", pred_path, "predicted label volume")->required();
    eval_seg->add_option("--case", case_id, "case id for the CSV");

    int crop_label = 0;
    double expansion = 2.0;
    std::string dims_spec, mode = "nearest";
    auto* crop = app.add_subcommand("crop", "extract one instance as a binary subvolume");
    add_common(crop, args);
    crop->add_option("--in", in_path, "label volume")->required();
    crop->add_option("--boxes", boxes_path, "box-set JSON")->required();
    crop->add_option("--label", crop_label, "instance label")->required();
    crop->add_option("--expansion", expansion, "box expansion in mm");
    crop->add_option("--dims", dims_spec, "output dims x,y,z (default: native resolution)");
    crop->add_option("--mode", mode, "nearest|trilinear");

    std::string like_path, labels_csv;
    std::vector<std::string> merge_inputs;
    auto* merge = app.add_subcommand("merge", "merge binary submasks into an instance volume");
    add_common(merge, args);
    merge->add_option("--like", like_path, "volume whose grid receives the merge")->required();
    merge->add_option("--in", merge_inputs, "binary submask volumes")->required();
    merge->add_option("--labels", labels_csv, "comma-separated label per input")->required();

    auto* train = app.add_subcommand("train-toy", "train the steerable toy detector");
    add_common(train, args);

    std::string bank_path, meta_path;
    auto* infer = app.add_subcommand("infer-toy", "steerable inference from a trained bank");
    add_common(infer, args);
    infer->add_option("--bank", bank_path, "query bank JSON")->required();
    infer->add_option("--meta", meta_path, "image meta JSON for denormalization")->required();
    infer->add_option("--labels", labels_csv, "comma-separated subset (default: all)");

    std::string lambdas_csv = "0,1,2,4,8";
    int sweep_seeds = 10;
    auto* ablate = app.add_subcommand("ablate-lambda-m", "binding ablation sweep over lambda_m");
    add_common(ablate, args);
    ablate->add_option("--lambdas", lambdas_csv, "comma-separated lambda_m values");
    ablate->add_option("--seeds", sweep_seeds, "training seeds per lambda_m");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
    }

    try {
        if (synth->parsed()) return run_synth(args);
        if (parameterize->parsed()) return run_parameterize(args, in_path);
        if (augment->parsed()) return run_augment(args, in_path, boxes_path, crop_spec);
        if (match_cmd->parsed())
            return run_match(
                args, pred_path, gt_path,
                lambda_m_flag < 0 ? std::nullopt : std::optional<double>(lambda_m_flag), dump_cost);
        if (eval_det->parsed()) return run_evaluate_det(args, gt_path, pred_path, case_id);
        if (eval_seg->parsed()) return run_evaluate_seg(args, gt_path, pred_path, case_id);
        if (crop->parsed())
            return run_crop(args, in_path, boxes_path, crop_label, expansion, dims_spec, mode);
        if (merge->parsed()) return run_merge(args, like_path, merge_inputs, labels_csv);
        if (train->parsed()) return run_train_toy(args);
        if (infer->parsed()) return run_infer_toy(args, bank_path, meta_path, labels_csv);
        if (ablate->parsed()) return run_ablate(args, lambdas_csv, sweep_seeds);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace anat9
