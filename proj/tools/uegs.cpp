// Command-line pipeline driver: each subcommand consumes the previous
// stage's artifacts and persists its own next to a run manifest.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uegs/fisher.hpp"
#include "uegs/io.hpp"
#include "uegs/metrics.hpp"
#include "uegs/parallel.hpp"
#include "uegs/regression.hpp"
#include "uegs/render.hpp"
#include "uegs/representations.hpp"
#include "uegs/sh.hpp"
#include "uegs/synthetic.hpp"
#include "uegs/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uegs;

namespace {

using Config = std::vector<std::pair<std::string, std::string>>;

std::string fmt_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

enum class Target { Depth, Render };

Target target_from_string(const std::string& s) {
    if (s == "depth") return Target::Depth;
    if (s == "render") return Target::Render;
    throw std::invalid_argument("--target must be 'depth' or 'render'");
}

enum class MaskRole { Full, Object, Background };

MaskRole mask_role_from_string(const std::string& s) {
    if (s == "full") return MaskRole::Full;
    if (s == "object") return MaskRole::Object;
    if (s == "background") return MaskRole::Background;
    throw std::invalid_argument("--mask-role must be 'full', 'object' or 'background'");
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream stream(s);
    std::string item;
    while (std::getline(stream, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Per-pixel regression target for a view: the scene rendered into the
/// camera, compared against the view's ground truth.
ErrorMap target_error_map(const GaussianScene& scene, const View& view, Target target) {
    if (target == Target::Render) {
        ImageBuffer rendered = render_view(scene, view.camera, ColorSource{}).image;
        return pixel_error_map(view.gt_color, rendered);
    }
    if (!view.gt_depth.has_value()) {
        throw std::invalid_argument("view '" + view.id +
                                    "' has no depth ground truth; --target depth needs a .pfm");
    }
    ImageBuffer rendered = render_view(scene, view.camera, DepthSource{false}).image;
    return pixel_error_map(*view.gt_depth, rendered);
}

/// Valid-target pixels intersected with the requested mask region.
ImageBuffer evaluation_mask(const View& view, const ErrorMap& error, MaskRole role) {
    ImageBuffer mask = error.valid;
    if (role == MaskRole::Full) return mask;
    if (!view.mask.has_value()) {
        throw std::invalid_argument("view '" + view.id +
                                    "' has no mask image; --mask-role needs images/<id>.mask.png");
    }
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        const bool in_object = view.mask->data[i] != 0.0;
        const bool wanted = role == MaskRole::Object ? in_object : !in_object;
        if (!wanted) mask.data[i] = 0.0;
    }
    return mask;
}

FeatureMapSet select_channels(const FeatureMapSet& maps, const std::vector<std::string>& names) {
    FeatureMapSet out;
    out.channel_names = names;
    out.maps = ImageBuffer(maps.maps.width, maps.maps.height, static_cast<int>(names.size()));
    for (std::size_t c = 0; c < names.size(); ++c) {
        auto it = std::find(maps.channel_names.begin(), maps.channel_names.end(), names[c]);
        if (it == maps.channel_names.end()) {
            throw std::invalid_argument("feature maps have no channel '" + names[c] + "'");
        }
        const int src = static_cast<int>(it - maps.channel_names.begin());
        for (int y = 0; y < maps.maps.height; ++y) {
            for (int x = 0; x < maps.maps.width; ++x) {
                out.maps.at(x, y, static_cast<int>(c)) = maps.maps.at(x, y, src);
            }
        }
    }
    return out;
}

/// Loads <id>.uefm and/or <id>.fisher.uefm and concatenates their channels.
FeatureMapSet load_view_maps(const fs::path& dir, const std::string& id) {
    const fs::path main_path = dir / (id + ".uefm");
    const fs::path fisher_path = dir / (id + ".fisher.uefm");
    std::optional<FeatureMapSet> maps;
    if (fs::exists(main_path)) maps = read_uefm(main_path);
    if (fs::exists(fisher_path)) {
        FeatureMapSet fisher_maps = read_uefm(fisher_path);
        if (!maps.has_value()) {
            maps = std::move(fisher_maps);
        } else {
            if (fisher_maps.maps.width != maps->maps.width ||
                fisher_maps.maps.height != maps->maps.height) {
                throw std::invalid_argument("feature map dimensions disagree for view '" + id +
                                            "'");
            }
            std::vector<std::string> all = maps->channel_names;
            all.insert(all.end(), fisher_maps.channel_names.begin(),
                       fisher_maps.channel_names.end());
            FeatureMapSet merged;
            merged.channel_names = all;
            merged.maps = ImageBuffer(maps->maps.width, maps->maps.height,
                                      static_cast<int>(all.size()));
            const int base = maps->maps.channels;
            for (int y = 0; y < merged.maps.height; ++y) {
                for (int x = 0; x < merged.maps.width; ++x) {
                    for (int c = 0; c < base; ++c) {
                        merged.maps.at(x, y, c) = maps->maps.at(x, y, c);
                    }
                    for (int c = 0; c < fisher_maps.maps.channels; ++c) {
                        merged.maps.at(x, y, base + c) = fisher_maps.maps.at(x, y, c);
                    }
                }
            }
            maps = std::move(merged);
        }
    }
    if (!maps.has_value()) {
        throw std::invalid_argument("no feature maps for view '" + id + "' under " +
                                    dir.string());
    }
    return *maps;
}

/// Resolves a --features selector against a view's stored channels.
std::vector<std::string> feature_selection(const std::string& selector,
                                           const FeatureMapSet& maps) {
    if (selector == "all13") return standard_channel_names(false);
    if (selector == "all13-dir") return standard_channel_names(true);
    if (selector == "fisher6") return fisher_channel_names();
    if (selector.rfind("subset:", 0) == 0) {
        auto names = split_csv(selector.substr(7));
        if (names.empty()) throw std::invalid_argument("--features subset: lists no channels");
        return names;
    }
    if (selector == "file") return maps.channel_names;
    throw std::invalid_argument("--features must be all13, all13-dir, fisher6, file or "
                                "subset:<comma-separated names>");
}

struct TrainingData {
    PixelDataset dataset;
    // Kept alive for backward_selection's pointer-based EvalView list.
    std::vector<FeatureMapSet> eval_maps;
    std::vector<ImageBuffer> eval_targets;
    std::vector<ImageBuffer> eval_masks;
};

GbdtParams gbdt_params_from(int n_trees, int max_depth, double learning_rate, int min_leaf) {
    GbdtParams p;
    p.n_trees = n_trees;
    p.max_depth = max_depth;
    p.learning_rate = learning_rate;
    p.min_leaf = min_leaf;
    return p;
}

int run_command(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ParseError& e) {
        std::cerr << "error: parse: " << e.what() << "\n";
    } catch (const IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid-input: " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Post-hoc uncertainty estimation for Gaussian-splatting scenes"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)")
        ->capture_default_str();

    // ---- synth ----------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene bundle");
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    int synth_n = 500, synth_cameras = 12, synth_size = 128;
    double synth_world_radius = 1.0, synth_ring_radius = 3.5, synth_focal = 110.0;
    std::string synth_heights = "0.7,1.6";
    double synth_drop = -1.0, synth_jitter = -1.0, synth_opacity_noise = -1.0;
    synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output bundle directory")->required();
    synth->add_option("--n-gaussians", synth_n)->capture_default_str();
    synth->add_option("--camera-count", synth_cameras)->capture_default_str();
    synth->add_option("--image-size", synth_size, "Square image side in pixels")
        ->capture_default_str();
    synth->add_option("--world-radius", synth_world_radius)->capture_default_str();
    synth->add_option("--ring-radius", synth_ring_radius)->capture_default_str();
    synth->add_option("--ring-heights", synth_heights, "Comma-separated ring heights (1-3)")
        ->capture_default_str();
    synth->add_option("--focal", synth_focal)->capture_default_str();
    synth->add_option("--drop", synth_drop, "Drop-fraction degradation (default 0.3)");
    synth->add_option("--jitter", synth_jitter, "Mean-jitter degradation sigma");
    synth->add_option("--opacity-noise", synth_opacity_noise, "Opacity-noise degradation sigma");

    // ---- render ---------------------------------------------------------
    auto* render = app.add_subcommand("render", "Render the bundle scene into every camera");
    std::string render_scene, render_out;
    bool render_depth = false, render_normalized = false;
    render->add_option("--scene", render_scene, "Scene bundle directory")->required();
    render->add_option("--out", render_out, "Output directory")->required();
    render->add_flag("--depth", render_depth, "Also write blended depth as PFM");
    render->add_flag("--normalized-depth", render_normalized,
                     "Normalize blended depth by accumulated weight");

    // ---- logs -----------------------------------------------------------
    auto* logs = app.add_subcommand(
        "logs", "Contribution logs and color error maps for every training view");
    std::string logs_scene, logs_out;
    logs->add_option("--scene", logs_scene, "Scene bundle directory")->required();
    logs->add_option("--out", logs_out, "Output directory")->required();

    // ---- represent ------------------------------------------------------
    auto* represent =
        app.add_subcommand("represent", "Build the 13 per-Gaussian representations");
    std::string repr_scene, repr_logs, repr_out;
    bool repr_directional = false, repr_mean_visible = false;
    double repr_kappa = 8.0, repr_margin = 0.1;
    int repr_degree = 4, repr_samples = 256;
    represent->add_option("--scene", repr_scene, "Scene bundle directory")->required();
    represent->add_option("--logs", repr_logs, "Directory produced by `logs`")->required();
    represent->add_option("--out", repr_out, "Output .uepr file")->required();
    represent->add_flag("--directional", repr_directional,
                        "vMF-weighted, SH-encoded representations");
    represent->add_option("--kappa", repr_kappa, "vMF concentration")->capture_default_str();
    represent->add_option("--sh-degree", repr_degree, "SH encoding degree")
        ->capture_default_str();
    represent->add_option("--frustum-margin", repr_margin)->capture_default_str();
    represent->add_option("--sphere-samples", repr_samples)->capture_default_str();
    represent->add_flag("--mean-visible-only", repr_mean_visible,
                        "Divide error means by visible-view count instead of all views");

    // ---- features -------------------------------------------------------
    auto* features = app.add_subcommand(
        "features", "Render representations into per-view uncertainty feature maps");
    std::string feat_scene, feat_repr, feat_out;
    bool feat_all_views = false;
    features->add_option("--scene", feat_scene, "Scene bundle directory")->required();
    features->add_option("--repr", feat_repr, ".uepr file from `represent`")->required();
    features->add_option("--out", feat_out, "Output directory")->required();
    features->add_flag("--all-views", feat_all_views,
                       "Include training views (default: holdout views only)");

    // ---- fisher ---------------------------------------------------------
    auto* fisher_cmd =
        app.add_subcommand("fisher", "FisherRF baseline uncertainty feature maps");
    std::string fisher_scene, fisher_out;
    bool fisher_no_geometric = false;
    fisher_cmd->add_option("--scene", fisher_scene, "Scene bundle directory")->required();
    fisher_cmd->add_option("--out", fisher_out, "Output directory")->required();
    fisher_cmd->add_flag("--no-geometric", fisher_no_geometric,
                         "Skip the finite-difference mean/scale/rotation groups");

    // ---- fit ------------------------------------------------------------
    auto* fit = app.add_subcommand("fit", "Fit the error regressor on holdout-train-reg views");
    std::string fit_scene, fit_maps, fit_out, fit_target = "render", fit_model = "gbdt";
    std::string fit_features = "all13", fit_mask_role = "full";
    int fit_trees = 200, fit_depth = 3, fit_min_leaf = 20;
    double fit_lr = 0.1;
    fit->add_option("--scene", fit_scene, "Scene bundle directory")->required();
    fit->add_option("--maps", fit_maps, "Feature map directory")->required();
    fit->add_option("--out", fit_out, "Output model JSON")->required();
    fit->add_option("--target", fit_target, "depth or render")->capture_default_str();
    fit->add_option("--model", fit_model, "gbdt or linear")->capture_default_str();
    fit->add_option("--features", fit_features,
                    "all13, all13-dir, fisher6, file or subset:<names>")
        ->capture_default_str();
    fit->add_option("--mask-role", fit_mask_role, "full, object or background")
        ->capture_default_str();
    fit->add_option("--n-trees", fit_trees)->capture_default_str();
    fit->add_option("--max-depth", fit_depth)->capture_default_str();
    fit->add_option("--learning-rate", fit_lr)->capture_default_str();
    fit->add_option("--min-leaf", fit_min_leaf)->capture_default_str();

    // ---- predict --------------------------------------------------------
    auto* predict_cmd = app.add_subcommand("predict", "Predicted-error maps for holdout views");
    std::string pred_scene, pred_maps, pred_model, pred_out;
    predict_cmd->add_option("--scene", pred_scene, "Scene bundle directory")->required();
    predict_cmd->add_option("--maps", pred_maps, "Feature map directory")->required();
    predict_cmd->add_option("--model", pred_model, "Model JSON from `fit`")->required();
    predict_cmd->add_option("--out", pred_out, "Output directory")->required();

    // ---- evaluate -------------------------------------------------------
    auto* evaluate =
        app.add_subcommand("evaluate", "Pearson/AUSE metrics on holdout-eval views");
    std::string eval_scene, eval_maps, eval_model, eval_out, eval_target = "render";
    std::string eval_mask_role = "full";
    int eval_steps = 100;
    evaluate->add_option("--scene", eval_scene, "Scene bundle directory")->required();
    evaluate->add_option("--maps", eval_maps, "Feature map directory")->required();
    evaluate->add_option("--model", eval_model, "Model JSON from `fit`")->required();
    evaluate->add_option("--out", eval_out, "Output CSV report")->required();
    evaluate->add_option("--target", eval_target, "depth or render")->capture_default_str();
    evaluate->add_option("--mask-role", eval_mask_role)->capture_default_str();
    evaluate->add_option("--steps", eval_steps, "Sparsification steps")->capture_default_str();

    // ---- select ---------------------------------------------------------
    auto* select = app.add_subcommand("select", "Step-wise backward feature elimination");
    std::string sel_scene, sel_maps, sel_out, sel_target = "render", sel_mask_role = "full";
    std::string sel_features = "all13";
    bool sel_pooled = false;
    int sel_trees = 200, sel_depth = 3, sel_min_leaf = 20;
    double sel_lr = 0.1;
    select->add_option("--scene", sel_scene, "Scene bundle directory")->required();
    select->add_option("--maps", sel_maps, "Feature map directory")->required();
    select->add_option("--out", sel_out, "Output trace JSON")->required();
    select->add_option("--target", sel_target, "depth or render")->capture_default_str();
    select->add_option("--features", sel_features, "Starting feature set")
        ->capture_default_str();
    select->add_option("--mask-role", sel_mask_role)->capture_default_str();
    select->add_flag("--pooled", sel_pooled,
                     "Score on pooled pixels instead of mean per-view Pearson");
    select->add_option("--n-trees", sel_trees)->capture_default_str();
    select->add_option("--max-depth", sel_depth)->capture_default_str();
    select->add_option("--learning-rate", sel_lr)->capture_default_str();
    select->add_option("--min-leaf", sel_min_leaf)->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    set_thread_count(threads);

    // Assembles the training dataset plus eval-view data shared by fit/select.
    auto build_training_data = [&](const SceneBundle& bundle, const fs::path& maps_dir,
                                   Target target, MaskRole mask_role,
                                   const std::string& selector) {
        TrainingData data;
        std::vector<FeatureMapSet> train_maps;
        std::vector<ErrorMap> train_errors;
        std::vector<ImageBuffer> train_masks;
        std::vector<ViewSample> samples;
        for (const View& view : bundle.views.views) {
            if (view.role != ViewRole::HoldoutTrainReg) continue;
            FeatureMapSet maps = load_view_maps(maps_dir, view.id);
            train_maps.push_back(select_channels(maps, feature_selection(selector, maps)));
            train_errors.push_back(target_error_map(bundle.scene, view, target));
            train_masks.push_back(evaluation_mask(view, train_errors.back(), mask_role));
        }
        if (train_maps.empty()) {
            throw std::invalid_argument("no holdout-train-reg views in the bundle");
        }
        std::size_t i = 0;
        for (const View& view : bundle.views.views) {
            if (view.role != ViewRole::HoldoutTrainReg) continue;
            samples.push_back(ViewSample{view.id, &train_maps[i], &train_errors[i].map,
                                         &train_masks[i]});
            ++i;
        }
        data.dataset = assemble_dataset(samples);
        for (const View& view : bundle.views.views) {
            if (view.role != ViewRole::HoldoutEval) continue;
            FeatureMapSet maps = load_view_maps(maps_dir, view.id);
            data.eval_maps.push_back(select_channels(maps, feature_selection(selector, maps)));
            ErrorMap error = target_error_map(bundle.scene, view, target);
            data.eval_masks.push_back(evaluation_mask(view, error, mask_role));
            data.eval_targets.push_back(std::move(error.map));
        }
        return data;
    };

    if (synth->parsed()) {
        return run_command([&] {
            SynthSpec spec;
            spec.seed = synth_seed;
            spec.n_gaussians = synth_n;
            spec.camera_count = synth_cameras;
            spec.image_width = spec.image_height = synth_size;
            spec.world_radius = synth_world_radius;
            spec.ring_radius = synth_ring_radius;
            spec.focal = synth_focal;
            const auto heights = split_csv(synth_heights);
            spec.ring_heights.clear();
            for (const auto& h : heights) spec.ring_heights.push_back(std::stod(h));
            int modes = 0;
            if (synth_drop >= 0.0) ++modes;
            if (synth_jitter >= 0.0) ++modes;
            if (synth_opacity_noise >= 0.0) ++modes;
            if (modes > 1) {
                throw std::invalid_argument(
                    "choose one of --drop, --jitter, --opacity-noise");
            }
            if (synth_jitter >= 0.0) {
                spec.degradation = {SynthDegradation::Mode::JitterMeans, synth_jitter};
            } else if (synth_opacity_noise >= 0.0) {
                spec.degradation = {SynthDegradation::Mode::OpacityNoise, synth_opacity_noise};
            } else {
                spec.degradation = {SynthDegradation::Mode::DropFraction,
                                    synth_drop >= 0.0 ? synth_drop : 0.3};
            }

            const SynthResult result = generate(spec);
            const fs::path out(synth_out);
            fs::create_directories(out / "images");
            write_gaussian_ply(out / "scene.ply", result.degraded);
            write_gaussian_ply(out / "truth.ply", result.truth);
            write_cameras_json(out / "cameras.json", result.views);
            for (const View& view : result.views.views) {
                write_png(out / "images" / (view.id + ".png"), view.gt_color, 16);
                write_pfm(out / "images" / (view.id + ".pfm"), *view.gt_depth);
            }

            Config config{{"seed", std::to_string(spec.seed)},
                          {"n_gaussians", std::to_string(spec.n_gaussians)},
                          {"camera_count", std::to_string(spec.camera_count)},
                          {"image_size", std::to_string(spec.image_width)},
                          {"world_radius", fmt_double(spec.world_radius)},
                          {"ring_radius", fmt_double(spec.ring_radius)},
                          {"ring_heights", synth_heights},
                          {"focal", fmt_double(spec.focal)},
                          {"degradation_mode",
                           spec.degradation.mode == SynthDegradation::Mode::DropFraction
                               ? "drop"
                               : (spec.degradation.mode == SynthDegradation::Mode::JitterMeans
                                      ? "jitter"
                                      : "opacity-noise")},
                          {"degradation_amount", fmt_double(spec.degradation.amount)}};
            write_run_manifest(out, "synth", config, {});
        });
    }

    if (render->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(render_scene);
            const fs::path out(render_out);
            fs::create_directories(out);
            for (const View& view : bundle.views.views) {
                ImageBuffer color =
                    render_view(bundle.scene, view.camera, ColorSource{}).image;
                write_png(out / (view.id + ".png"), color, 16);
                if (render_depth) {
                    ImageBuffer depth =
                        render_view(bundle.scene, view.camera, DepthSource{render_normalized})
                            .image;
                    write_pfm(out / (view.id + ".pfm"), depth);
                }
            }
            Config config{{"depth", render_depth ? "on" : "off"},
                          {"normalized_depth", render_normalized ? "on" : "off"},
                          {"threads", std::to_string(threads)}};
            write_run_manifest(out, "render", config, {render_scene});
        });
    }

    if (logs->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(logs_scene);
            const fs::path out(logs_out);
            fs::create_directories(out);
            for (const View& view : bundle.views.views) {
                if (view.role != ViewRole::Train) continue;
                RenderResult rendered =
                    render_view(bundle.scene, view.camera, ColorSource{}, true);
                write_uecl(out / (view.id + ".uecl"), *rendered.log);
                const ErrorMap error = pixel_error_map(view.gt_color, rendered.image);
                FeatureMapSet error_maps;
                error_maps.channel_names = {"error", "valid"};
                error_maps.maps = ImageBuffer(error.map.width, error.map.height, 2);
                for (int y = 0; y < error.map.height; ++y) {
                    for (int x = 0; x < error.map.width; ++x) {
                        error_maps.maps.at(x, y, 0) = error.map.at(x, y, 0);
                        error_maps.maps.at(x, y, 1) = error.valid.at(x, y, 0);
                    }
                }
                write_uefm(out / (view.id + ".err.uefm"), error_maps);
            }
            Config config{{"threads", std::to_string(threads)}};
            write_run_manifest(out, "logs", config, {logs_scene});
        });
    }

    if (represent->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(repr_scene);
            const fs::path logs_dir(repr_logs);
            std::vector<Camera> cameras;
            std::vector<ContributionLog> log_storage;
            std::vector<ImageBuffer> error_storage;
            for (const View& view : bundle.views.views) {
                if (view.role != ViewRole::Train) continue;
                cameras.push_back(view.camera);
                log_storage.push_back(read_uecl(logs_dir / (view.id + ".uecl")));
                FeatureMapSet error_maps = read_uefm(logs_dir / (view.id + ".err.uefm"));
                ImageBuffer error(error_maps.maps.width, error_maps.maps.height, 1);
                for (int y = 0; y < error.height; ++y) {
                    for (int x = 0; x < error.width; ++x) {
                        error.at(x, y, 0) = error_maps.maps.at(x, y, 0);
                    }
                }
                error_storage.push_back(std::move(error));
            }
            if (cameras.empty()) throw std::invalid_argument("no training views in the bundle");

            std::vector<const ContributionLog*> log_ptrs;
            std::vector<const ImageBuffer*> error_ptrs;
            for (const auto& log : log_storage) log_ptrs.push_back(&log);
            for (const auto& error : error_storage) error_ptrs.push_back(&error);

            RepresentationConfig cfg;
            cfg.directional = repr_directional;
            cfg.kappa = repr_kappa;
            cfg.sh_degree = repr_degree;
            cfg.frustum_margin = repr_margin;
            cfg.sphere_samples = repr_samples;
            cfg.mean_over_visible_only = repr_mean_visible;
            const auto reps =
                build_feature_representations(bundle.scene, cameras, log_ptrs, error_ptrs, cfg);
            write_uepr(repr_out, reps);

            Config config{{"directional", repr_directional ? "on" : "off"},
                          {"kappa", fmt_double(repr_kappa)},
                          {"sh_degree", std::to_string(repr_degree)},
                          {"frustum_margin", fmt_double(repr_margin)},
                          {"sphere_samples", std::to_string(repr_samples)},
                          {"mean_visible_only", repr_mean_visible ? "on" : "off"},
                          {"threads", std::to_string(threads)}};
            write_run_manifest(repr_out, "represent", config, {repr_scene, repr_logs});
        });
    }

    if (features->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(feat_scene);
            const auto reps = read_uepr(feat_repr);
            const fs::path out(feat_out);
            fs::create_directories(out);
            for (const View& view : bundle.views.views) {
                if (!feat_all_views && view.role == ViewRole::Train) continue;
                FeatureMapSet maps = render_feature_maps(bundle.scene, reps, view.camera);
                write_uefm(out / (view.id + ".uefm"), maps);
            }
            Config config{{"all_views", feat_all_views ? "on" : "off"},
                          {"threads", std::to_string(threads)}};
            write_run_manifest(out, "features", config, {feat_scene, feat_repr});
        });
    }

    if (fisher_cmd->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(fisher_scene);
            std::vector<Camera> cameras;
            for (const View& view : bundle.views.views) {
                if (view.role == ViewRole::Train) cameras.push_back(view.camera);
            }
            if (cameras.empty()) throw std::invalid_argument("no training views in the bundle");
            const FisherDiagonal diag =
                fisher_diagonal(bundle.scene, cameras, !fisher_no_geometric);
            const FisherUncertainty uncertainty = grouped_uncertainty(diag);
            std::vector<PrimitiveRepresentation> reps = uncertainty.groups;
            reps.push_back(uncertainty.plain);

            const fs::path out(fisher_out);
            fs::create_directories(out);
            for (const View& view : bundle.views.views) {
                if (view.role == ViewRole::Train) continue;
                FeatureMapSet maps = render_feature_maps(bundle.scene, reps, view.camera);
                write_uefm(out / (view.id + ".fisher.uefm"), maps);
            }
            Config config{{"geometric", fisher_no_geometric ? "off" : "on"},
                          {"threads", std::to_string(threads)}};
            write_run_manifest(out, "fisher", config, {fisher_scene});
        });
    }

    if (fit->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(fit_scene);
            const Target target = target_from_string(fit_target);
            const MaskRole mask_role = mask_role_from_string(fit_mask_role);
            TrainingData data =
                build_training_data(bundle, fit_maps, target, mask_role, fit_features);
            std::string serialized;
            if (fit_model == "gbdt") {
                const GBDTModel model = fit_gbdt(
                    data.dataset, gbdt_params_from(fit_trees, fit_depth, fit_lr, fit_min_leaf));
                serialized = serialize_model(model);
            } else if (fit_model == "linear") {
                serialized = serialize_model(fit_linear(data.dataset));
            } else {
                throw std::invalid_argument("--model must be 'gbdt' or 'linear'");
            }
            write_text_file(fit_out, serialized);

            Config config{{"target", fit_target},
                          {"model", fit_model},
                          {"features", fit_features},
                          {"mask_role", fit_mask_role},
                          {"n_trees", std::to_string(fit_trees)},
                          {"max_depth", std::to_string(fit_depth)},
                          {"learning_rate", fmt_double(fit_lr)},
                          {"min_leaf", std::to_string(fit_min_leaf)},
                          {"threads", std::to_string(threads)}};
            write_run_manifest(fit_out, "fit", config, {fit_scene, fit_maps});
        });
    }

    if (predict_cmd->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(pred_scene);
            const std::string model_text = read_text_file(pred_model);
            const std::string type = model_type_of(model_text);
            const fs::path out(pred_out);
            fs::create_directories(out);
            for (const View& view : bundle.views.views) {
                if (view.role == ViewRole::Train) continue;
                const FeatureMapSet maps = load_view_maps(pred_maps, view.id);
                ImageBuffer predicted;
                if (type == "gbdt") {
                    predicted = predict(parse_gbdt_model(model_text), maps);
                } else if (type == "linear") {
                    predicted = predict(parse_linear_model(model_text), maps);
                } else {
                    throw ParseError(pred_model + ": unknown model type '" + type + "'");
                }
                FeatureMapSet pred_maps_set;
                pred_maps_set.channel_names = {"predicted-error"};
                pred_maps_set.maps = std::move(predicted);
                // Predicted errors may be slightly negative; clamp for the
                // non-negative feature map invariant.
                for (auto& v : pred_maps_set.maps.data) v = std::max(0.0, v);
                write_uefm(out / (view.id + ".pred.uefm"), pred_maps_set);
            }
            Config config{{"threads", std::to_string(threads)}};
            write_run_manifest(out, "predict", config, {pred_scene, pred_maps, pred_model});
        });
    }

    if (evaluate->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(eval_scene);
            const Target target = target_from_string(eval_target);
            const MaskRole mask_role = mask_role_from_string(eval_mask_role);
            const std::string model_text = read_text_file(eval_model);
            const std::string type = model_type_of(model_text);
            const std::string scene_name = fs::path(eval_scene).filename().string();

            std::vector<ViewMetrics> per_view;
            for (const View& view : bundle.views.views) {
                if (view.role != ViewRole::HoldoutEval) continue;
                const FeatureMapSet maps = load_view_maps(eval_maps, view.id);
                ImageBuffer predicted;
                if (type == "gbdt") {
                    predicted = predict(parse_gbdt_model(model_text), maps);
                } else if (type == "linear") {
                    predicted = predict(parse_linear_model(model_text), maps);
                } else {
                    throw ParseError(eval_model + ": unknown model type '" + type + "'");
                }
                const ErrorMap error = target_error_map(bundle.scene, view, target);
                const ImageBuffer mask = evaluation_mask(view, error, mask_role);

                ViewMetrics vm;
                vm.view_id = view.id;
                vm.scene = scene_name;
                vm.target = eval_target;
                vm.pearson = pearson(predicted, error.map, &mask).value_or(0.0);
                vm.ause = sparsification(error.map, predicted, &mask, eval_steps).ause;
                per_view.push_back(std::move(vm));
            }
            if (per_view.empty()) {
                throw std::invalid_argument("no holdout-eval views in the bundle");
            }
            write_text_file(eval_out, metrics_csv(aggregate_metrics(per_view)));

            Config config{{"target", eval_target},
                          {"mask_role", eval_mask_role},
                          {"steps", std::to_string(eval_steps)},
                          {"threads", std::to_string(threads)}};
            write_run_manifest(eval_out, "evaluate", config,
                               {eval_scene, eval_maps, eval_model});
        });
    }

    if (select->parsed()) {
        return run_command([&] {
            const SceneBundle bundle = load_scene_bundle(sel_scene);
            const Target target = target_from_string(sel_target);
            const MaskRole mask_role = mask_role_from_string(sel_mask_role);
            TrainingData data =
                build_training_data(bundle, sel_maps, target, mask_role, sel_features);
            if (data.eval_maps.empty()) {
                throw std::invalid_argument("no holdout-eval views in the bundle");
            }
            std::vector<EvalView> eval_views;
            for (std::size_t i = 0; i < data.eval_maps.size(); ++i) {
                eval_views.push_back(EvalView{&data.eval_maps[i], &data.eval_targets[i],
                                              &data.eval_masks[i]});
            }
            const SelectionTrace trace = backward_selection(
                data.dataset, eval_views,
                gbdt_params_from(sel_trees, sel_depth, sel_lr, sel_min_leaf), sel_pooled);

            json steps = json::array();
            for (const auto& step : trace.steps) {
                steps.push_back({{"dropped", step.dropped},
                                 {"score", step.score},
                                 {"surviving", step.surviving}});
            }
            json doc;
            doc["steps"] = std::move(steps);
            doc["steps_survived"] = trace.steps_survived;
            write_text_file(sel_out, doc.dump(2) + "\n");

            Config config{{"target", sel_target},
                          {"features", sel_features},
                          {"mask_role", sel_mask_role},
                          {"pooled", sel_pooled ? "on" : "off"},
                          {"n_trees", std::to_string(sel_trees)},
                          {"max_depth", std::to_string(sel_depth)},
                          {"learning_rate", fmt_double(sel_lr)},
                          {"min_leaf", std::to_string(sel_min_leaf)},
                          {"threads", std::to_string(threads)}};
            write_run_manifest(sel_out, "select", config, {sel_scene, sel_maps});
        });
    }

    return 0;
}
