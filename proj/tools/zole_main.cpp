#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "zole/pipeline.hpp"

namespace {

// Training options shared by pretrain and adapt. Precedence: command-line
// flags beat the JSON config file, which beats the built-in defaults.
struct TrainFlags {
  std::string config_path;
  double r;
  int batch_size;
  double lr;
  int k_max;
  int validate_every;
  uint64_t seed;
  int crop_size;
  double tau, lambda_agg, w_left, w_curr, w_fine, alpha;
  int patch_side;

  void add_to(CLI::App* sub) {
    const zole::AdaptConfig d;
    r = d.r;
    batch_size = d.batch_size;
    lr = d.lr;
    k_max = d.k_max;
    validate_every = d.validate_every;
    seed = d.seed;
    crop_size = d.crop_size;
    tau = d.weights.tau;
    lambda_agg = d.weights.lambda_agg;
    w_left = d.weights.w_left;
    w_curr = d.weights.w_curr;
    w_fine = d.weights.w_fine;
    alpha = d.weights.alpha;
    patch_side = d.weights.patch_side;

    sub->add_option("--config", config_path, "JSON config file (flags override its values)")
        ->check(CLI::ExistingFile);
    sub->add_option("--r", r, "zoom ratio for finer-grain targets")->capture_default_str();
    sub->add_option("--batch-size", batch_size, "examples per iteration")->capture_default_str();
    sub->add_option("--lr", lr, "SGD learning rate")->capture_default_str();
    sub->add_option("--k-max", k_max, "training iterations")->capture_default_str();
    sub->add_option("--validate-every", validate_every, "iterations between validations")
        ->capture_default_str();
    sub->add_option("--seed", seed, "random seed")->capture_default_str();
    sub->add_option("--crop-size", crop_size, "square training crop side")->capture_default_str();
    sub->add_option("--tau", tau, "synthetic L1 weight")->capture_default_str();
    sub->add_option("--lambda-agg", lambda_agg, "graph regularizer weight")
        ->capture_default_str();
    sub->add_option("--w-left", w_left, "left-view exemplar weight")->capture_default_str();
    sub->add_option("--w-curr", w_curr, "current-prediction exemplar weight")
        ->capture_default_str();
    sub->add_option("--w-fine", w_fine, "finer-prediction exemplar weight")
        ->capture_default_str();
    sub->add_option("--alpha", alpha, "spatial term weight in edge distances")
        ->capture_default_str();
    sub->add_option("--patch-side", patch_side, "graph patch side in pixels")
        ->capture_default_str();
  }

  zole::AdaptConfig resolve(const CLI::App* sub) const {
    zole::AdaptConfig cfg;
    if (!config_path.empty()) cfg = zole::load_adapt_config(config_path);
    auto override_if = [&](const char* name, auto& dst, const auto& src) {
      if (sub->count(name) > 0) dst = src;
    };
    override_if("--r", cfg.r, r);
    override_if("--batch-size", cfg.batch_size, batch_size);
    override_if("--lr", cfg.lr, lr);
    override_if("--k-max", cfg.k_max, k_max);
    override_if("--validate-every", cfg.validate_every, validate_every);
    override_if("--seed", cfg.seed, seed);
    override_if("--crop-size", cfg.crop_size, crop_size);
    override_if("--tau", cfg.weights.tau, tau);
    override_if("--lambda-agg", cfg.weights.lambda_agg, lambda_agg);
    override_if("--w-left", cfg.weights.w_left, w_left);
    override_if("--w-curr", cfg.weights.w_curr, w_curr);
    override_if("--w-fine", cfg.weights.w_fine, w_fine);
    override_if("--alpha", cfg.weights.alpha, alpha);
    override_if("--patch-side", cfg.weights.patch_side, patch_side);
    return cfg;
  }
};

std::ofstream g_log_file;

std::ostream* open_log(const std::string& path) {
  if (path.empty()) return &std::cout;
  g_log_file.open(path, std::ios::trunc);
  if (!g_log_file) throw std::runtime_error(path + ": cannot open for writing");
  return &g_log_file;
}

int run_gen_data(const std::string& out, int count, const std::string& role_str,
                 const std::string& spec_path) {
  const zole::DatasetRole role = zole::parse_role(role_str);
  zole::SceneSpec spec;
  if (!spec_path.empty()) spec = zole::load_scene_spec(spec_path);
  zole::generate_dataset(out, count, role, spec);
  std::fprintf(stderr, "gen-data: wrote %d %s pair(s) to %s\n", count, zole::role_name(role),
               out.c_str());
  return 0;
}

int run_pretrain(const std::string& synth_dir, const std::string& out,
                 const std::string& log_path, int max_disparity, zole::AdaptConfig cfg) {
  const std::vector<zole::StereoPair> synth = zole::load_synthetic_dir(synth_dir);
  const zole::ToyStereoModel model(synth.front().left.channels, max_disparity);
  std::ostream* log = open_log(log_path);
  const zole::AdaptResult res = zole::pretrain(model, synth, cfg, log);
  zole::save_checkpoint(out, model, res.best_theta);
  std::fprintf(stderr, "pretrain: best validation PSNR %.3f dB, checkpoint written to %s\n",
               res.best_psnr, out.c_str());
  return 0;
}

int run_adapt(const std::string& init, const std::string& domain_dir,
              const std::string& synth_dir, const std::string& val_dir, const std::string& out,
              const std::string& log_path, const zole::AdaptConfig& cfg) {
  const auto [model, theta0] = zole::load_checkpoint(init);
  std::vector<zole::StereoPair> domain, synth;
  if (!domain_dir.empty()) domain = zole::load_domain_dir(domain_dir);
  if (!synth_dir.empty()) synth = zole::load_synthetic_dir(synth_dir);
  const std::vector<zole::StereoPair> val = zole::load_domain_dir(val_dir);
  std::ostream* log = open_log(log_path);
  const zole::AdaptResult res = zole::adapt(model, theta0, domain, synth, val, cfg, log);
  zole::save_checkpoint(out, model, res.best_theta);
  std::fprintf(stderr, "adapt: best validation PSNR %.3f dB, checkpoint written to %s\n",
               res.best_psnr, out.c_str());
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_dir) {
  const auto [model, theta] = zole::load_checkpoint(ckpt);
  double sum_epe = 0, sum_3er = 0, sum_psnr = 0, sum_ssim = 0;
  int n = 0;
  for (const std::string& dir : zole::list_pair_dirs(data_dir)) {
    const zole::LabeledPair lp = zole::load_labeled_pair(dir);
    const zole::EvalRecord rec = zole::evaluate_pair(model, theta, lp);
    nlohmann::ordered_json line{{"pair", std::filesystem::path(dir).filename().string()},
                                {"epe", rec.epe},
                                {"3er", rec.three_er},
                                {"psnr", rec.psnr},
                                {"ssim", rec.ssim}};
    std::cout << line.dump() << "\n";
    sum_epe += rec.epe;
    sum_3er += rec.three_er;
    sum_psnr += rec.psnr;
    sum_ssim += rec.ssim;
    ++n;
  }
  nlohmann::ordered_json agg{{"aggregate", true}, {"pairs", n},
                             {"epe", sum_epe / n},  {"3er", sum_3er / n},
                             {"psnr", sum_psnr / n}, {"ssim", sum_ssim / n}};
  std::cout << agg.dump() << "\n";
  return 0;
}

int run_predict(const std::string& ckpt, const std::string& in_dir, const std::string& out_dir,
                bool zoom_given, double zoom) {
  const auto [model, theta] = zole::load_checkpoint(ckpt);
  const std::vector<std::string> dirs = zole::list_pair_dirs(in_dir);
  std::filesystem::create_directories(out_dir);
  bool any_failed = false;
  for (const std::string& dir : dirs) {
    const std::string name = std::filesystem::path(dir).filename().string();
    try {
      const zole::StereoPair pair = zole::load_domain_pair(dir);
      const zole::Map2D pred =
          zoom_given ? zole::zoom_target(model, theta, pair, zoom) : model.forward(pair, theta);
      zole::write_pfm((std::filesystem::path(out_dir) / (name + ".pfm")).string(), pred);
    } catch (const std::exception& e) {
      std::cerr << "error: " << name << ": " << e.what() << "\n";
      any_failed = true;
    }
  }
  return any_failed ? 1 : 0;
}

int run_graph_dump(const std::string& left_path, const std::string& curr_path,
                   const std::string& fine_path, int patch, const std::string& config_path) {
  zole::LossWeights w;
  if (!config_path.empty()) w = zole::load_adapt_config(config_path).weights;
  const zole::Map2D gray = zole::to_gray(zole::read_pnm(left_path));
  const zole::Map2D curr = zole::read_pfm(curr_path).as_map();
  const zole::Map2D fine = zole::read_pfm(fine_path).as_map();
  if (!gray.same_shape(curr) || !gray.same_shape(fine))
    throw std::invalid_argument("graph-dump: input dims differ");
  const zole::PatchGrid grid = zole::make_patch_grid(gray.height, gray.width, w.patch_side);
  zole::check_patch_index(grid, patch);
  const zole::ExemplarSet ex = zole::build_exemplars(gray, curr, fine, grid, patch, w);
  std::cout << zole::dump_graph(zole::build_graph(ex, w.alpha));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-regularized self-adaptation for stereo matching"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "cap worker threads (0 keeps the OpenMP default)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic stereo dataset");
  std::string gen_out, gen_role, gen_spec;
  int gen_count = 0;
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--count", gen_count, "number of pairs")->required();
  gen->add_option("--role", gen_role, "domain, synthetic, val, or test")->required();
  gen->add_option("--spec", gen_spec, "scene spec JSON file")->check(CLI::ExistingFile);

  auto* pre = app.add_subcommand("pretrain", "supervised training on synthetic pairs");
  std::string pre_synth, pre_out, pre_log;
  int pre_maxdisp = 16;
  TrainFlags pre_flags;
  pre_flags.add_to(pre);
  pre->add_option("--synth-dir", pre_synth, "synthetic dataset directory")->required();
  pre->add_option("--out", pre_out, "output checkpoint file")->required();
  pre->add_option("--log", pre_log, "training log file (default stdout)");
  pre->add_option("--max-disparity", pre_maxdisp, "disparity search range")
      ->capture_default_str();

  auto* ad = app.add_subcommand("adapt", "self-adapt a pretrained model to a target domain");
  std::string ad_init, ad_domain, ad_synth, ad_val, ad_out, ad_log;
  TrainFlags ad_flags;
  ad_flags.add_to(ad);
  ad->add_option("--init", ad_init, "pretrained checkpoint")->required()
      ->check(CLI::ExistingFile);
  ad->add_option("--domain-dir", ad_domain, "unlabeled domain dataset directory");
  ad->add_option("--synth-dir", ad_synth, "labeled synthetic dataset directory");
  ad->add_option("--val-dir", ad_val, "validation dataset directory")->required();
  ad->add_option("--out", ad_out, "output checkpoint file")->required();
  ad->add_option("--log", ad_log, "training log file (default stdout)");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on pairs with ground truth");
  std::string ev_ckpt, ev_dir;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--data-dir", ev_dir, "dataset directory with gt.pfm files")->required();

  auto* pr = app.add_subcommand("predict", "write disparity predictions as PFM files");
  std::string pr_ckpt, pr_in, pr_out;
  double pr_zoom = 1.0;
  pr->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required()
      ->check(CLI::ExistingFile);
  pr->add_option("--in", pr_in, "input dataset directory")->required();
  pr->add_option("--out", pr_out, "output directory")->required();
  pr->add_option("--zoom", pr_zoom, "predict at this zoom ratio, rescaled back")
      ->capture_default_str();

  auto* gd = app.add_subcommand("graph-dump", "print the exemplar graph of one patch");
  std::string gd_left, gd_curr, gd_fine, gd_config;
  int gd_patch = 0;
  gd->add_option("--left", gd_left, "left view (PPM or PGM)")->required()
      ->check(CLI::ExistingFile);
  gd->add_option("--curr", gd_curr, "current prediction (PFM)")->required()
      ->check(CLI::ExistingFile);
  gd->add_option("--fine", gd_fine, "finer-grain prediction (PFM)")->required()
      ->check(CLI::ExistingFile);
  gd->add_option("--patch", gd_patch, "patch index, row major")->required();
  gd->add_option("--config", gd_config, "JSON config file for graph weights")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
#ifdef _OPENMP
    if (workers > 0) omp_set_num_threads(workers);
#endif
    if (gen->parsed()) return run_gen_data(gen_out, gen_count, gen_role, gen_spec);
    if (pre->parsed())
      return run_pretrain(pre_synth, pre_out, pre_log, pre_maxdisp, pre_flags.resolve(pre));
    if (ad->parsed())
      return run_adapt(ad_init, ad_domain, ad_synth, ad_val, ad_out, ad_log,
                       ad_flags.resolve(ad));
    if (ev->parsed()) return run_eval(ev_ckpt, ev_dir);
    if (pr->parsed())
      return run_predict(pr_ckpt, pr_in, pr_out, pr->count("--zoom") > 0, pr_zoom);
    if (gd->parsed()) return run_graph_dump(gd_left, gd_curr, gd_fine, gd_patch, gd_config);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
