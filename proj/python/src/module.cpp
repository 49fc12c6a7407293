#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vtt/checks.hpp"
#include "vtt/experiment.hpp"

namespace py = pybind11;
using namespace vtt;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const std::vector<float>& v, std::vector<py::ssize_t> shape) {
  py::array_t<float> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Observation make_observation(int hw, const FloatArray& image, const FloatArray& wrench) {
  const auto px = static_cast<py::ssize_t>(hw) * hw * 3;
  if (image.size() != px) throw ShapeError("image must have " + std::to_string(px) + " values");
  if (wrench.size() != 6) throw ShapeError("wrench must have 6 values");
  Observation o;
  o.image.assign(image.data(), image.data() + px);
  std::copy(wrench.data(), wrench.data() + 6, o.wrench.begin());
  return o;
}

py::dict step_dict(const StepResult& r, int hw) {
  py::dict d;
  d["image"] = to_numpy(r.obs.image, {hw, hw, 3});
  d["wrench"] = to_numpy({r.obs.wrench.begin(), r.obs.wrench.end()}, {6});
  d["reward"] = r.reward;
  d["done"] = r.done;
  d["success"] = r.success;
  d["contact"] = r.contact;
  d["distance"] = r.distance;
  return d;
}

/// Environment plus its current state, seeded once.
class PyEnv {
 public:
  PyEnv(const ExperimentConfig& cfg, std::uint64_t seed) : env_(cfg.env), rng_(seed) { reset(); }

  py::dict reset() {
    state_ = env_.reset(rng_);
    StepResult r;
    r.obs = env_.observe(state_);
    r.distance = env_.goal_distance(state_);
    return step_dict(r, env_.config().image_hw);
  }
  py::dict step(double ax, double ay) { return step_dict(env_.step(state_, {ax, ay}), env_.config().image_hw); }
  std::array<double, 2> scripted_action() const { return scripted_push_action(env_.config(), state_); }
  py::dict state() const {
    py::dict d;
    d["ee"] = state_.ee;
    d["block"] = state_.block;
    d["block_yaw"] = state_.block_yaw;
    d["block_mass"] = state_.block_mass;
    d["goal"] = state_.goal;
    d["step"] = state_.step_count;
    return d;
  }

 private:
  TouchPushEnv env_;
  SeededRng rng_;
  PushState state_;
};

py::dict encode(const Agent& a, const FloatArray& image, const FloatArray& wrench) {
  const int hw = a.config().image_hw;
  const Observation o = make_observation(hw, image, wrench);
  NoGradGuard guard;
  FusionOutput<float> f = a.fusion().encode(ObservationBatch<float>::from_observations(hw, {&o}), nullptr, true);
  py::dict d;
  d["z"] = to_numpy(f.z.values(), {f.z.shape()[1]});
  d["contact_logit"] = f.contact_logits.defined() ? py::cast(f.contact_logits.item()) : py::none();
  d["align_logit"] = f.align_logits.defined() ? py::cast(f.align_logits.item()) : py::none();
  if (const VttEncoder<float>* enc = a.fusion().vtt()) {
    EncoderOutput<float> out{f.z, f.traces};
    const AttentionRecord rec = AttentionRecord::from_output(out, enc->layout(), 0);
    const auto R = static_cast<py::ssize_t>(rec.tokens());
    py::array_t<double> att({static_cast<py::ssize_t>(rec.layers.size()), static_cast<py::ssize_t>(rec.heads), R, R});
    double* dst = att.mutable_data();
    for (const auto& layer : rec.layers) dst = std::copy(layer.begin(), layer.end(), dst);
    d["attention"] = att;
    const ModalityProportion p =
        modality_proportion(average_heads(rec, a.config().heatmap.all_layers ? LayerSelect::kMean : LayerSelect::kFinal),
                            rec.layout);
    d["visual"] = p.visual;
    d["tactile"] = p.tactile;
  }
  return d;
}

py::dict read_archive(const std::string& path) {
  py::dict d;
  const TensorArchive a = TensorArchive::load(path);
  for (const auto& e : a.entries()) {
    std::vector<py::ssize_t> shape(e.shape.begin(), e.shape.end());
    d[py::str(e.name)] = to_numpy(e.data, shape);
  }
  return d;
}

void write_archive(const std::string& path, const py::dict& tensors) {
  TensorArchive a;
  for (const auto& [k, v] : tensors) {
    const auto arr = v.cast<FloatArray>();
    Shape shape(arr.shape(), arr.shape() + arr.ndim());
    a.add(k.cast<std::string>(), shape, std::vector<float>(arr.data(), arr.data() + arr.size()));
  }
  a.save(path);
}

}  // namespace

PYBIND11_MODULE(_pyvtt, m) {
  m.doc() = "Visuo-tactile transformer core bindings";

  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);

  py::class_<ExperimentConfig>(m, "Config")
      .def(py::init([] {
        ExperimentConfig c;
        c.validate();
        return c;
      }))
      .def_static("parse", &ExperimentConfig::parse, py::arg("text"))
      .def_static("load", &ExperimentConfig::load, py::arg("path"))
      .def("to_text", &ExperimentConfig::to_text)
      .def("save", &ExperimentConfig::save, py::arg("path"))
      .def(
          "set",
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.set(k, v);
            c.validate();
          },
          py::arg("key"), py::arg("value"))
      .def_property_readonly("seed", [](const ExperimentConfig& c) { return c.seed; })
      .def_property_readonly("fusion", [](const ExperimentConfig& c) { return fusion_name(c.fusion); })
      .def_property_readonly("image_hw", [](const ExperimentConfig& c) { return c.image_hw; });

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const ExperimentConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed"))
      .def("reset", &PyEnv::reset)
      .def("step", &PyEnv::step, py::arg("ax"), py::arg("ay"))
      .def("scripted_action", &PyEnv::scripted_action)
      .def("state", &PyEnv::state);

  py::class_<Agent>(m, "Agent")
      .def(py::init<const ExperimentConfig&>(), py::arg("config"))
      .def("save", [](const Agent& a, const std::string& p) { a.to_archive().save(p); }, py::arg("path"))
      .def("load", [](Agent& a, const std::string& p) { a.load(TensorArchive::load(p)); }, py::arg("path"))
      .def(
          "act",
          [](const Agent& a, const FloatArray& image, const FloatArray& wrench, std::array<double, 2> prev) {
            return a.act(make_observation(a.config().image_hw, image, wrench), prev, nullptr);
          },
          py::arg("image"), py::arg("wrench"), py::arg("prev_action") = std::array<double, 2>{0.0, 0.0})
      .def("encode", &encode, py::arg("image"), py::arg("wrench"))
      .def("parameter_count", [](const Agent& a) {
        std::size_t n = 0;
        for (const auto& t : a.model_params()) n += t.numel();
        return n + count_parameters(a.actor().params()) + count_parameters(a.critic().params());
      });

  m.def(
      "generate_dataset",
      [](const ExperimentConfig& cfg, const std::string& path) {
        const EpisodeDataset d = generate_dataset(cfg);
        d.save(path);
        py::dict out;
        out["episodes"] = d.episodes.size();
        out["steps"] = d.steps();
        out["contact_fraction"] = d.contact_fraction();
        return out;
      },
      py::arg("config"), py::arg("path"));

  m.def(
      "train_repr",
      [](Agent& agent, const std::string& dataset) {
        const EpisodeDataset d = EpisodeDataset::load(dataset);
        ReprResult r;
        {
          py::gil_scoped_release release;
          r = train_repr(agent, d);
        }
        py::dict out;
        std::vector<double> total;
        for (const auto& s : r.log) total.push_back(s.total);
        out["loss"] = total;
        out["holdout_contact_accuracy"] = r.holdout.contact;
        out["holdout_align_accuracy"] = r.holdout.align;
        out["final_kl_per_step"] = r.final_kl_per_step;
        return out;
      },
      py::arg("agent"), py::arg("dataset"));

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        py::dict out;
        for (const auto& c : gradcheck_suite(seed)) out[py::str(c.module)] = c.report.max_rel_error;
        return out;
      },
      py::arg("seed") = 0);

  m.def("full_scale_parameter_counts", [] {
    const FullScaleParams p = full_scale_parameter_counts();
    py::dict d;
    d["vtt"] = p.vtt;
    d["concat"] = p.concat;
    d["poe"] = p.poe;
    d["concat_adjusted"] = p.concat_adjusted;
    d["poe_adjusted"] = p.poe_adjusted;
    return d;
  });

  m.def("read_archive", &read_archive, py::arg("path"));
  m.def("write_archive", &write_archive, py::arg("path"), py::arg("tensors"));
}
