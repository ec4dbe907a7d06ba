#include "egoflow/egoflow.h"

#include "egoflow/pipeline.hpp"

#include <fstream>
#include <string>

struct egoflow_session {
  egoflow::RunContext ctx;
  std::string output;
  std::string config_text;
};

struct egoflow_model {
  egoflow::BiFlowModel model;
  double scale = 1.0;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
egoflow_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return EGOFLOW_OK;
  } catch (const egoflow::MissingInput& e) {
    g_last_error = e.what();
    return EGOFLOW_ERR_MISSING_INPUT;
  } catch (const egoflow::ConfigError& e) {
    g_last_error = e.what();
    return EGOFLOW_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EGOFLOW_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return EGOFLOW_ERR_RUNTIME;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw egoflow::Error(what);
}

}  // namespace

extern "C" {

const char* egoflow_version(void) {
  static const std::string v = egoflow::version_string();
  return v.c_str();
}

const char* egoflow_last_error(void) { return g_last_error.c_str(); }

egoflow_status egoflow_session_open(const char* config_path, const char* out_dir, egoflow_session** session) {
  return guarded([&] {
    require(session != nullptr && out_dir != nullptr, "session_open: null argument");
    auto s = std::make_unique<egoflow_session>();
    s->ctx.out = out_dir;
    s->ctx.document = nlohmann::json::object();
    if (config_path && *config_path) {
      s->ctx.config_path = config_path;
      std::ifstream in(config_path);
      if (!in) throw egoflow::MissingInput(config_path);
      try {
        s->ctx.document = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw egoflow::ConfigError(std::string("cannot parse ") + config_path + ": " + e.what());
      }
    }
    egoflow::RunConfig::from_json(s->ctx.document);
    *session = s.release();
  });
}

void egoflow_session_close(egoflow_session* session) { delete session; }

egoflow_status egoflow_session_override(egoflow_session* session, const char* dotted_key, const char* json_value) {
  return guarded([&] {
    require(session && dotted_key && json_value, "session_override: null argument");
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(json_value);
    } catch (const nlohmann::json::exception&) {
      throw egoflow::ConfigError(std::string("override ") + dotted_key + ": not JSON: " + json_value);
    }
    nlohmann::json doc = session->ctx.document;
    egoflow::apply_override(doc, dotted_key, value);
    egoflow::RunConfig::from_json(doc);
    session->ctx.document = std::move(doc);
    session->ctx.overrides[dotted_key] = value;
  });
}

egoflow_status egoflow_session_run(egoflow_session* session, const char* command) {
  return guarded([&] {
    require(session && command, "session_run: null argument");
    session->output.clear();
    session->output = egoflow::run_command(command, session->ctx).text;
  });
}

const char* egoflow_session_output(const egoflow_session* session) {
  return session ? session->output.c_str() : "";
}

const char* egoflow_session_config(egoflow_session* session) {
  if (!session) return "";
  try {
    session->config_text = egoflow::RunConfig::from_json(session->ctx.document).to_json().dump(2);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    session->config_text.clear();
  }
  return session->config_text.c_str();
}

egoflow_status egoflow_model_load(const char* checkpoint_path, egoflow_model** model) {
  return guarded([&] {
    require(checkpoint_path && model, "model_load: null argument");
    egoflow::CheckpointMeta meta;
    egoflow::BiFlowModel m = egoflow::load_checkpoint(checkpoint_path, &meta);
    const double scale = meta.data.value("scale", 1.0);
    *model = new egoflow_model{std::move(m), scale};
  });
}

void egoflow_model_free(egoflow_model* model) { delete model; }

egoflow_status egoflow_model_info(const egoflow_model* model, int* history_steps, int* future_steps, int* modes) {
  return guarded([&] {
    require(model != nullptr, "model_info: null model");
    const auto& c = model->model.config();
    if (history_steps) *history_steps = c.history_steps;
    if (future_steps) *future_steps = c.future_steps;
    if (modes) *modes = c.modes;
  });
}

egoflow_status egoflow_model_predict(const egoflow_model* model, const double* history, const double* mask,
                                     int agents, int ego_index, int k, int steps, uint64_t seed, double* out_traj,
                                     double* out_logits) {
  return guarded([&] {
    require(model && history && mask && out_traj, "model_predict: null argument");
    require(agents >= 1 && ego_index >= 0 && ego_index < agents, "model_predict: bad agent layout");
    require(steps >= 1, "model_predict: steps must be positive");
    const auto& c = model->model.config();
    require(k >= 1 && k <= c.modes, "model_predict: k outside [1, modes]");
    const int Tp = c.history_steps;
    const int Tf = c.future_steps;

    egoflow::ObservedHistory h;
    h.values = Eigen::Map<const egoflow::Matrix>(history, agents, 2 * Tp);
    h.mask = Eigen::Map<const egoflow::Matrix>(mask, agents, Tp);
    h.ego_index = ego_index;
    h.validate();
    egoflow::fill_invisible(h.values, h.mask);
    const egoflow::NormRecord norm = egoflow::ego_norm_record(h, model->scale);
    egoflow::ObservedHistory hn = h;
    hn.values = egoflow::apply_norm(h.values, norm);

    egoflow::Rng rng = egoflow::derive_rng(seed, 0);
    const auto grid = egoflow::logit_normal_grid(steps);
    const egoflow::CandidateSet cs = model->model.sample_future(hn, k, grid, rng);
    const egoflow::Matrix reference = egoflow::last_points(hn.values);
    for (int j = 0; j < k; ++j) {
      const egoflow::Matrix rel = cs.trajectories.middleRows(static_cast<Eigen::Index>(j) * agents, agents);
      const egoflow::Matrix world = egoflow::invert_norm(egoflow::from_displacements(rel, reference), norm);
      Eigen::Map<egoflow::Matrix>(out_traj + static_cast<size_t>(j) * agents * 2 * Tf, agents, 2 * Tf) = world;
    }
    if (out_logits) Eigen::Map<egoflow::Matrix>(out_logits, k, agents) = cs.logits;
  });
}

}  // extern "C"
