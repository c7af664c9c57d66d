// Alternating WGAN-GP optimization of the two generators against the critic,
// with deterministic counter-based randomness (batch order, interpolation
// draws and initialization all derive from the seed and the iteration index,
// so runs replay bit-for-bit and checkpoints resume exactly).
//
// Per generator iteration: the minibatch is assembled, generator outputs are
// computed once, the critic takes critic_updates_per_gen steps on that batch
// (fresh interpolation draws each step, gradient penalty averaged over the
// two fake sources), and both generators then take one joint Adam step
// against the updated critic.
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dna/adam.hpp"
#include "dna/checkpoint.hpp"
#include "dna/data_io.hpp"
#include "dna/losses.hpp"
#include "dna/metrics.hpp"
#include "dna/model.hpp"
#include "dna/model_io.hpp"

namespace dna {

struct TrainConfig {
  Index batch_size = 10;
  AdamConfig adam;  // lr 1e-4, beta1 0.5, beta2 0.9, eps 1e-8
  Index critic_updates_per_gen = 4;
  Index max_iterations = 1000;
  Index pretrain_iterations = 0;
  std::uint64_t seed = 0;
  Index checkpoint_every = 500;
  LossWeights loss_weights;

  void validate() const {
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(critic_updates_per_gen >= 1, "train: critic_updates_per_gen must be >= 1");
    require(max_iterations >= 0 && pretrain_iterations >= 0, "train: negative iteration count");
    adam.validate();
    loss_weights.validate();
  }
};

struct LossRow {
  long long iteration = 0;
  double critic_loss = 0, gen_total = 0;
  double mse1 = 0, mse2 = 0, ssim1 = 0, ssim2 = 0;
  double sino1 = 0, sino2 = 0, adv1 = 0, adv2 = 0, gp = 0;
};

inline std::string loss_csv_header() {
  return "iteration,critic_loss,gen_total,mse1,mse2,ssim1,ssim2,sino1,sino2,adv1,adv2,gp";
}

inline std::string loss_csv_row(const LossRow& r) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << r.iteration << ',' << r.critic_loss << ',' << r.gen_total << ',' << r.mse1 << ','
     << r.mse2 << ',' << r.ssim1 << ',' << r.ssim2 << ',' << r.sino1 << ',' << r.sino2 << ','
     << r.adv1 << ',' << r.adv2 << ',' << r.gp;
  return os.str();
}

template <class Scalar>
std::uint64_t corpus_hash(const Dataset<Scalar>& ds) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&](const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    mix(ds.ids[i].data(), ds.ids[i].size());
    for (Index j = 0; j < ds.images[i].numel(); ++j) {
      const float v = static_cast<float>(ds.images[i][j]);
      mix(&v, sizeof(v));
    }
  }
  return h;
}

namespace traindet {

// RNG stream ids
inline constexpr std::uint64_t kShuffle = 0x51;
inline constexpr std::uint64_t kGpDraw = 0x6b;

inline std::vector<Index> epoch_permutation(const Rng& rng, std::uint64_t phase_id,
                                            std::uint64_t epoch, Index n) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng r = rng.stream(kShuffle).stream(phase_id).stream(epoch);
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(r.below(static_cast<std::uint64_t>(i), std::uint64_t(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

}  // namespace traindet

template <class Scalar>
class Trainer {
 public:
  Trainer(DnaParams<Scalar>& params, const GeometryConfig& geo, const TrainConfig& cfg)
      : params_(params),
        geo_(geo),
        cfg_(cfg),
        rng_(cfg.seed),
        adam_gen_(cfg.adam),
        adam_critic_(cfg.adam) {
    cfg_.validate();
    geo_.validate();
  }

  long long iteration() const { return iteration_; }
  Adam<Scalar>& gen_optimizer() { return adam_gen_; }
  Adam<Scalar>& critic_optimizer() { return adam_critic_; }

  // Moments reset between phases: corpus statistics shift.
  void reset_optimizers() {
    adam_gen_.reset();
    adam_critic_.reset();
  }

  // Runs `iterations` generator iterations of phase `phase_id` over ds,
  // appending one LossRow per iteration.
  void run_phase(const Dataset<Scalar>& ds, std::uint64_t phase_id, Index iterations,
                 std::vector<LossRow>& rows,
                 const std::function<void(long long)>& on_iteration = nullptr) {
    require(ds.size() > 0, "train: empty dataset");
    const Index B = cfg_.batch_size, N = geo_.image_size, V = geo_.num_views;

    // per-item FBP cache
    std::vector<Tensor<Scalar>> fbp_cache(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
      fbp_cache[i] =
          fbp_reconstruct_batch(ds.sinograms[i].reshaped({1, 1, V, N}), geo_).reshaped({N, N});

    for (Index it = 0; it < iterations; ++it) {
      const long long global = iteration_;

      // --- assemble batch -------------------------------------------------
      Tensor<Scalar> truth({B, 1, N, N}), sino({B, 1, V, N}), fbp({B, 1, N, N});
      for (Index k = 0; k < B; ++k) {
        const std::uint64_t draw = static_cast<std::uint64_t>(phase_iter_) * B + k;
        const std::uint64_t epoch = draw / ds.size();
        const auto perm = traindet::epoch_permutation(rng_, phase_id, epoch,
                                                      static_cast<Index>(ds.size()));
        const Index item = perm[static_cast<std::size_t>(draw % ds.size())];
        truth.chunk(k * N * N, N * N) = ds.images[item].array();
        sino.chunk(k * V * N, V * N) = ds.sinograms[item].array();
        fbp.chunk(k * N * N, N * N) = fbp_cache[item].array();
      }

      // --- generator forwards (fixed through the critic updates) ----------
      G1Trace<Scalar> tr1;
      G2Trace<Scalar> tr2;
      Tensor<Scalar> i1 = g1_forward(sino, params_, geo_, &tr1);
      Tensor<Scalar> i2 = g2_forward(fbp, i1, params_, &tr2);

      LossRow row;
      row.iteration = global + 1;

      // --- critic steps ----------------------------------------------------
      for (Index k = 0; k < cfg_.critic_updates_per_gen; ++k) {
        params_.zero_critic_grads();
        CriticTrace<Scalar> trr, trf1, trf2;
        Tensor<Scalar> sr = critic_forward(truth, params_.critic, &trr);
        Tensor<Scalar> sf1 = critic_forward(i1, params_.critic, &trf1);
        Tensor<Scalar> sf2 = critic_forward(i2, params_.critic, &trf2);

        const Scalar invB = Scalar(1) / static_cast<Scalar>(B);
        critic_backward(params_.critic, trf1, Tensor<Scalar>::full({B}, invB), true);
        critic_backward(params_.critic, trf2, Tensor<Scalar>::full({B}, invB), true);
        critic_backward(params_.critic, trr, Tensor<Scalar>::full({B}, Scalar(-2) * invB), true);

        const Rng gp_rng = rng_.stream(traindet::kGpDraw)
                               .stream(phase_id)
                               .stream(static_cast<std::uint64_t>(global))
                               .stream(static_cast<std::uint64_t>(k));
        GradientPenaltyDetail<Scalar> d1, d2;
        const Scalar gp1 = gradient_penalty(params_.critic, truth, i1, gp_rng.stream(1), &d1);
        const Scalar gp2 = gradient_penalty(params_.critic, truth, i2, gp_rng.stream(2), &d2);
        const Scalar gp = (gp1 + gp2) / Scalar(2);
        const Scalar lam = static_cast<Scalar>(cfg_.loss_weights.lambda_gp);
        gradient_penalty_backward(params_.critic, d1, lam / Scalar(2));
        gradient_penalty_backward(params_.critic, d2, lam / Scalar(2));

        adam_critic_.begin_step();
        params_.for_each_critic_param(
            [&](const std::string& n, Tensor<Scalar>& t) { adam_critic_.update(n, t); });

        if (k + 1 == cfg_.critic_updates_per_gen) {
          row.critic_loss = double(critic_objective(sr, sf1, sf2, gp, lam));
          row.gp = double(gp);
        }
      }

      // --- joint generator step against the updated critic ----------------
      params_.zero_generator_grads();
      GeneratorTerms terms;
      terms.mse1 = double(mse_loss(truth, i1));
      terms.mse2 = double(mse_loss(truth, i2));
      const double ssim1 = double(ssim(truth, i1));
      const double ssim2 = double(ssim(truth, i2));
      terms.sl1 = 1.0 - ssim1;
      terms.sl2 = 1.0 - ssim2;
      terms.sino1 = double(sinogram_consistency_loss(i1, sino, geo_));
      terms.sino2 = double(sinogram_consistency_loss(i2, sino, geo_));

      CriticTrace<Scalar> trc1, trc2;
      Tensor<Scalar> sc1 = critic_forward(i1, params_.critic, &trc1);
      Tensor<Scalar> sc2 = critic_forward(i2, params_.critic, &trc2);
      terms.adv1 = double(adversarial_loss_g(sc1));
      terms.adv2 = double(adversarial_loss_g(sc2));

      const double total = generator_objective(terms, cfg_.loss_weights);
      row.gen_total = total;
      row.mse1 = terms.mse1;
      row.mse2 = terms.mse2;
      row.ssim1 = ssim1;
      row.ssim2 = ssim2;
      row.sino1 = terms.sino1;
      row.sino2 = terms.sino2;
      row.adv1 = terms.adv1;
      row.adv2 = terms.adv2;

      if (!std::isfinite(total) || !std::isfinite(row.critic_loss))
        throw std::runtime_error("train: non-finite loss at iteration " +
                                 std::to_string(global + 1));

      const Scalar lq = static_cast<Scalar>(cfg_.loss_weights.lambda_q);
      const Scalar lp = static_cast<Scalar>(cfg_.loss_weights.lambda_p);
      const Scalar lr = static_cast<Scalar>(cfg_.loss_weights.lambda_r);
      const Scalar invB = Scalar(1) / static_cast<Scalar>(B);

      auto image_cot = [&](const Tensor<Scalar>& img, CriticTrace<Scalar>& trc) {
        // d/d img of [mse + lp*(1-ssim) + lr*sino + lq*(-mean critic)]
        Tensor<Scalar> cot = mse_loss_grad_x(truth, img);
        Tensor<Scalar> dssim;
        ssim_vjp(truth, img, Scalar(1), &dssim, static_cast<Tensor<Scalar>*>(nullptr));
        cot.array() -= lp * dssim.array();
        cot.array() += lr * sinogram_consistency_grad(img, sino, geo_).array();
        Tensor<Scalar> dadv =
            critic_backward(params_.critic, trc, Tensor<Scalar>::full({B}, -invB), false);
        cot.array() += lq * dadv.array();
        return cot;
      };

      Tensor<Scalar> cot_i2 = image_cot(i2, trc2);
      Tensor<Scalar> cot_i1 = g2_backward(params_, tr2, cot_i2);
      cot_i1.array() += image_cot(i1, trc1).array();
      g1_backward(params_, geo_, tr1, cot_i1);

      adam_gen_.begin_step();
      params_.for_each_generator_param(
          [&](const std::string& n, Tensor<Scalar>& t) { adam_gen_.update(n, t); });

      rows.push_back(row);
      ++iteration_;
      ++phase_iter_;
      if (on_iteration) on_iteration(iteration_);
    }
  }

  void start_phase() { phase_iter_ = 0; }

  // --- checkpointing -------------------------------------------------------

  NamedTensors<Scalar> snapshot() {
    NamedTensors<Scalar> nt = model_snapshot(params_, geo_);
    Tensor<Scalar> it({2});
    it[0] = static_cast<Scalar>(iteration_);
    it[1] = static_cast<Scalar>(phase_iter_);
    nt.add("meta.iteration", std::move(it));
    auto dump_adam = [&](const char* tag, Adam<Scalar>& opt) {
      Tensor<Scalar> st({1});
      st[0] = static_cast<Scalar>(opt.step());
      nt.add(std::string("adam.") + tag + ".step", std::move(st));
      opt.for_each_slot([&](const std::string& n, const typename Adam<Scalar>::Array& m,
                            const typename Adam<Scalar>::Array& v) {
        Tensor<Scalar> tm({m.size()}), tv({v.size()});
        tm.array() = m;
        tv.array() = v;
        nt.add(std::string("adam.") + tag + ".m." + n, std::move(tm));
        nt.add(std::string("adam.") + tag + ".v." + n, std::move(tv));
      });
    };
    dump_adam("gen", adam_gen_);
    dump_adam("critic", adam_critic_);
    return nt;
  }

  void save(const std::string& path) { save_checkpoint(path, snapshot()); }

  // Restores parameters and optimizer state saved by snapshot().
  void restore(const NamedTensors<Scalar>& nt) {
    params_.for_each_param([&](const std::string& n, Tensor<Scalar>& t) {
      const Tensor<Scalar>& src = nt.at(n);
      require(src.shape() == t.shape(), "restore: shape mismatch for '" + n + "'");
      t.array() = src.array();
    });
    const Tensor<Scalar>& it = nt.at("meta.iteration");
    iteration_ = static_cast<long long>(it[0]);
    phase_iter_ = static_cast<long long>(it[1]);
    auto load_adam = [&](const char* tag, Adam<Scalar>& opt) {
      opt.reset();
      const std::string prefix = std::string("adam.") + tag;
      opt.restore_step(static_cast<long long>(nt.at(prefix + ".step")[0]));
      for (const auto& [name, t] : nt.items) {
        const std::string mpre = prefix + ".m.";
        if (name.rfind(mpre, 0) == 0) {
          const std::string pname = name.substr(mpre.size());
          const Tensor<Scalar>& v = nt.at(prefix + ".v." + pname);
          opt.restore_slot(pname, t.array(), v.array());
        }
      }
    };
    load_adam("gen", adam_gen_);
    load_adam("critic", adam_critic_);
  }

 private:
  DnaParams<Scalar>& params_;
  GeometryConfig geo_;
  TrainConfig cfg_;
  Rng rng_;
  Adam<Scalar> adam_gen_, adam_critic_;
  long long iteration_ = 0;   // global generator iterations
  long long phase_iter_ = 0;  // iterations within the current phase
};

// ---------------------------------------------------------------------------
// Orchestration: train_loop and the pretrain -> finetune schedule
// ---------------------------------------------------------------------------

struct TrainArtifacts {
  std::vector<LossRow> rows;
  std::string losses_csv_path;
  std::string manifest_path;
  std::string final_checkpoint_path;
};

template <class Scalar>
TrainArtifacts pretrain_then_finetune(DnaParams<Scalar>& params,
                                      const Dataset<Scalar>* natural_corpus,
                                      const Dataset<Scalar>& ct_corpus,
                                      const GeometryConfig& geo, const TrainConfig& cfg,
                                      const std::string& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  require(ct_corpus.size() > 0, "train: empty training corpus");
  require(cfg.pretrain_iterations == 0 || (natural_corpus && natural_corpus->size() > 0),
          "train: pretraining requested but the natural-image corpus is empty");
  fs::create_directories(out_dir);

  Trainer<Scalar> trainer(params, geo, cfg);
  TrainArtifacts art;
  art.losses_csv_path = (fs::path(out_dir) / "losses.csv").string();
  art.manifest_path = (fs::path(out_dir) / "manifest.json").string();

  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["losses_csv"] = art.losses_csv_path;
  manifest["config"] = {
      {"batch_size", cfg.batch_size},
      {"adam", {{"lr", cfg.adam.lr}, {"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2},
                {"eps", cfg.adam.eps}}},
      {"critic_updates_per_gen", cfg.critic_updates_per_gen},
      {"max_iterations", cfg.max_iterations},
      {"pretrain_iterations", cfg.pretrain_iterations},
      {"checkpoint_every", cfg.checkpoint_every},
      {"loss_weights", {{"lambda_q", cfg.loss_weights.lambda_q},
                        {"lambda_p", cfg.loss_weights.lambda_p},
                        {"lambda_r", cfg.loss_weights.lambda_r},
                        {"lambda_gp", cfg.loss_weights.lambda_gp}}},
      {"geometry", {{"image_size", geo.image_size}, {"num_views", geo.num_views},
                    {"num_detectors", geo.detectors()}, {"angular_span", geo.angular_span}}},
      {"arch", {{"branches", params.arch.branches}, {"unet_width", params.arch.unet_width},
                {"unet_groups", params.arch.unet_groups},
                {"critic_base", params.arch.critic_base}}},
  };
  manifest["phases"] = nlohmann::json::array();

  auto ckpt_path = [&](long long it) {
    std::ostringstream os;
    os << "checkpoint_" << std::setw(6) << std::setfill('0') << it << ".dna";
    return (fs::path(out_dir) / os.str()).string();
  };

  trainer.save(ckpt_path(0));  // initial checkpoint

  auto save_rows = [&]() {
    std::ofstream f(art.losses_csv_path, std::ios::binary);
    f << loss_csv_header() << '\n';
    for (const auto& r : art.rows) f << loss_csv_row(r) << '\n';
  };

  auto run = [&](const Dataset<Scalar>& ds, std::uint64_t phase_id, Index iters,
                 const char* name) {
    nlohmann::json phase;
    phase["name"] = name;
    phase["corpus_hash"] = corpus_hash(ds);
    phase["corpus_size"] = ds.size();
    phase["iterations"] = iters;
    phase["start_iteration"] = trainer.iteration();
    manifest["phases"].push_back(phase);
    trainer.start_phase();
    trainer.run_phase(ds, phase_id, iters, art.rows, [&](long long it) {
      if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) {
        trainer.save(ckpt_path(it));
        save_rows();
      }
    });
  };

  try {
    if (cfg.pretrain_iterations > 0) {
      run(*natural_corpus, 1, cfg.pretrain_iterations, "pretrain");
      trainer.reset_optimizers();
    }
    run(ct_corpus, 2, cfg.max_iterations, "finetune");
  } catch (const std::exception&) {
    // dump a diagnostic checkpoint before propagating
    trainer.save((fs::path(out_dir) / "checkpoint_diagnostic.dna").string());
    save_rows();
    throw;
  }

  art.final_checkpoint_path = (fs::path(out_dir) / "checkpoint_final.dna").string();
  trainer.save(art.final_checkpoint_path);
  save_rows();

  std::ofstream mf(art.manifest_path, std::ios::binary);
  mf << manifest.dump(2) << '\n';
  return art;
}

template <class Scalar>
TrainArtifacts train_loop(DnaParams<Scalar>& params, const Dataset<Scalar>& ds,
                          const GeometryConfig& geo, const TrainConfig& cfg,
                          const std::string& out_dir) {
  TrainConfig c = cfg;
  c.pretrain_iterations = 0;
  return pretrain_then_finetune<Scalar>(params, nullptr, ds, geo, c, out_dir);
}

}  // namespace dna
