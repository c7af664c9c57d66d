// Model snapshots in the checkpoint container: the named parameter tensors
// plus meta tensors carrying geometry and architecture, so a checkpoint is
// self-describing. Training checkpoints append optimizer state on top; the
// loader here ignores those extras.
#pragma once

#include "dna/checkpoint.hpp"
#include "dna/model.hpp"

namespace dna {

template <class Scalar>
void append_model_meta(NamedTensors<Scalar>& nt, const GeometryConfig& geo,
                       const ArchConfig& arch) {
  Tensor<Scalar> g({4});
  g[0] = static_cast<Scalar>(geo.image_size);
  g[1] = static_cast<Scalar>(geo.num_views);
  g[2] = static_cast<Scalar>(geo.detectors());
  g[3] = static_cast<Scalar>(geo.angular_span);
  nt.add("meta.geometry", std::move(g));
  Tensor<Scalar> a({4});
  a[0] = static_cast<Scalar>(arch.branches);
  a[1] = static_cast<Scalar>(arch.unet_width);
  a[2] = static_cast<Scalar>(arch.unet_groups);
  a[3] = static_cast<Scalar>(arch.critic_base);
  nt.add("meta.arch", std::move(a));
  Tensor<Scalar> fc({static_cast<Index>(arch.filter_channels.size())});
  for (std::size_t i = 0; i < arch.filter_channels.size(); ++i)
    fc[static_cast<Index>(i)] = static_cast<Scalar>(arch.filter_channels[i]);
  nt.add("meta.filter_channels", std::move(fc));
}

template <class Scalar>
std::pair<GeometryConfig, ArchConfig> read_model_meta(const NamedTensors<Scalar>& nt) {
  const Tensor<Scalar>& g = nt.at("meta.geometry");
  require(g.numel() == 4, "checkpoint: meta.geometry must have 4 entries");
  GeometryConfig geo;
  geo.image_size = static_cast<Index>(g[0]);
  geo.num_views = static_cast<Index>(g[1]);
  geo.num_detectors = static_cast<Index>(g[2]);
  geo.angular_span = static_cast<double>(g[3]);
  const Tensor<Scalar>& a = nt.at("meta.arch");
  require(a.numel() == 4, "checkpoint: meta.arch must have 4 entries");
  ArchConfig arch;
  arch.branches = static_cast<Index>(a[0]);
  arch.unet_width = static_cast<Index>(a[1]);
  arch.unet_groups = static_cast<Index>(a[2]);
  arch.critic_base = static_cast<Index>(a[3]);
  const Tensor<Scalar>& fc = nt.at("meta.filter_channels");
  arch.filter_channels.clear();
  for (Index i = 0; i < fc.numel(); ++i)
    arch.filter_channels.push_back(static_cast<Index>(fc[i]));
  geo.validate();
  return {geo, arch};
}

template <class Scalar>
NamedTensors<Scalar> model_snapshot(DnaParams<Scalar>& params, const GeometryConfig& geo) {
  NamedTensors<Scalar> nt;
  append_model_meta(nt, geo, params.arch);
  params.for_each_param([&](const std::string& n, Tensor<Scalar>& t) { nt.add(n, t); });
  return nt;
}

template <class Scalar>
void save_model(const std::string& path, DnaParams<Scalar>& params, const GeometryConfig& geo) {
  save_checkpoint(path, model_snapshot(params, geo));
}

template <class Scalar>
struct ModelSnapshot {
  GeometryConfig geo;
  DnaParams<Scalar> params;
};

template <class Scalar = float>
ModelSnapshot<Scalar> load_model(const std::string& path) {
  NamedTensors<Scalar> nt = load_checkpoint<Scalar>(path);
  auto [geo, arch] = read_model_meta(nt);
  ModelSnapshot<Scalar> snap{geo, DnaParams<Scalar>::identity(geo, arch)};
  snap.params.for_each_param([&](const std::string& n, Tensor<Scalar>& t) {
    const Tensor<Scalar>& src = nt.at(n);
    require(src.shape() == t.shape(), "checkpoint: tensor '" + n + "' has shape " +
                                          shape_str(src.shape()) + ", expected " +
                                          shape_str(t.shape()));
    t.array() = src.array();
  });
  return snap;
}

}  // namespace dna
