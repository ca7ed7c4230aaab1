#include "envforge/pipeline/pipeline.hpp"

namespace envforge::pipeline {
namespace {

using Path = std::filesystem::path;

template <typename Fn>
void each_key(const Document& doc, const std::string& section, Fn&& fn) {
  if (!doc.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (!fn(key, value)) {
      throw ConfigError("unknown key '" + key + "' in " + (section.empty() ? "config" : section));
    }
  }
}

Path resolve(const Path& base, const std::string& p) {
  Path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void parse_provider(const Document& doc, const Path& base, ProviderSettings& out) {
  each_key(doc, "provider", [&](const std::string& key, const Document& v) {
    if (key == "kind") out.kind = v.get<std::string>();
    else if (key == "mock_file") out.mock_file = resolve(base, v.get<std::string>());
    else if (key == "live") out.live = synth::LiveProviderConfig::from_document(v);
    else if (key == "max_retries") out.max_retries = v.get<int>();
    else if (key == "retry_backoff_ms") out.retry_backoff_ms = v.get<int>();
    else if (key == "rate_per_second") out.rate_per_second = v.get<double>();
    else if (key == "burst") out.burst = v.get<double>();
    else return false;
    return true;
  });
  if (out.kind != "mock" && out.kind != "live") {
    throw ConfigError("provider.kind must be mock or live, got '" + out.kind + "'");
  }
  if (out.max_retries < 0 || out.retry_backoff_ms < 0) {
    throw ConfigError("provider retry settings must be non-negative");
  }
  if (out.rate_per_second < 0 || out.burst < 1) throw ConfigError("invalid provider rate limit");
}

void parse_entropy(const Document& doc, PipelineConfig& c) {
  each_key(doc, "entropy", [&](const std::string& key, const Document& v) {
    if (key == "dataset") {
      c.entropy_dataset = v.get<std::string>();
    } else if (key == "batch_size") {
      c.descriptor_batch = v.get<std::size_t>();
    } else if (key == "taus") {
      c.taus = v.get<std::vector<double>>();
    } else if (key == "linkage") {
      diversity::linkage_from_string(v.get<std::string>());
    } else if (key == "embedder") {
      each_key(v, "entropy.embedder", [&](const std::string& k, const Document& e) {
        if (k == "kind") c.embedder.kind = e.get<std::string>();
        else if (k == "dimension") c.embedder.dimension = e.get<std::size_t>();
        else if (k == "remote") c.embedder.remote = diversity::RemoteEmbedderConfig::from_document(e);
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  if (c.descriptor_batch == 0) throw ConfigError("entropy.batch_size must be positive");
  if (c.embedder.kind != "hashing" && c.embedder.kind != "remote") {
    throw ConfigError("entropy.embedder.kind must be hashing or remote");
  }
  if (c.embedder.dimension == 0) throw ConfigError("entropy.embedder.dimension must be positive");
  if (c.taus.empty()) throw ConfigError("entropy.taus must not be empty");
  for (std::size_t i = 1; i < c.taus.size(); ++i) {
    if (!(c.taus[i] > c.taus[i - 1])) throw ConfigError("entropy.taus must be ascending");
  }
}

void parse_sections(const Document& doc, const Path& base, PipelineConfig& c) {
  bool calibration_sampling = false;
  each_key(doc, "", [&](const std::string& key, const Document& v) {
    if (key == "seed") {
      c.seed = v.get<std::uint64_t>();
    } else if (key == "workers") {
      c.workers = v.get<std::size_t>();
    } else if (key == "workspace") {
      c.workspace = resolve(base, v.get<std::string>());
    } else if (key == "provider") {
      parse_provider(v, base, c.provider);
    } else if (key == "sampling") {
      c.sampling = synth::SamplingParams::from_document(v);
    } else if (key == "sandbox") {
      c.sandbox = protocol::SandboxPolicy::from_document(v);
    } else if (key == "keywords") {
      each_key(v, "keywords", [&](const std::string& k, const Document& e) {
        if (k == "include_builtin") c.include_builtin_keywords = e.get<bool>();
        else if (k == "extra") c.extra_keywords = e.get<std::vector<std::string>>();
        else return false;
        return true;
      });
    } else if (key == "synthesis") {
      each_key(v, "synthesis", [&](const std::string& k, const Document& e) {
        if (k == "attempts_per_keyword") c.attempts_per_keyword = e.get<int>();
        else if (k == "script_host") c.script_host = e.get<std::vector<std::string>>();
        else if (k == "prompt_dir") c.prompt_dir = e.is_null() ? std::nullopt : std::optional(resolve(base, e.get<std::string>()));
        else return false;
        return true;
      });
    } else if (key == "judge") {
      each_key(v, "judge", [&](const std::string& k, const Document& e) {
        if (k == "smoke_test") c.smoke_test = e.get<bool>();
        else if (k == "probes_per_level") c.probes_per_level = e.get<int>();
        else return false;
        return true;
      });
    } else if (key == "calibration") {
      c.calibration = calib::CalibrationParams::from_document(v);
      c.calibration_seed_set = v.contains("seed");
      calibration_sampling = v.contains("sampling");
    } else if (key == "datasets") {
      each_key(v, "datasets", [&](const std::string& name, const Document& e) {
        if (name.empty() || name.find_first_of("/\\. ") != std::string::npos) {
          throw ConfigError("invalid dataset name '" + name + "'");
        }
        c.datasets[name] = dataset::DatasetConfig::from_document(e);
        c.dataset_seed_set[name] = e.contains("dataset_seed");
        return true;
      });
    } else if (key == "entropy") {
      parse_entropy(v, c);
    } else if (key == "serve") {
      each_key(v, "serve", [&](const std::string& k, const Document& e) {
        if (k == "port") c.serve_port = e.get<int>();
        else if (k == "dataset") c.serve_dataset = e.get<std::string>();
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  if (!calibration_sampling) c.calibration.sampling = c.sampling;
  if (!doc.contains("datasets")) {
    dataset::DatasetConfig train;
    train.env_count = 400;
    train.per_env = 40;
    dataset::DatasetConfig val = train;
    val.split = dataset::Split::val;
    c.datasets = {{"train", train}, {"val", val}};
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_document(const Document& doc, const Path& base_dir) {
  PipelineConfig c;
  try {
    parse_sections(doc, base_dir, c);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.attempts_per_keyword < 1) throw ConfigError("synthesis.attempts_per_keyword must be >= 1");
  if (c.probes_per_level < 1) throw ConfigError("judge.probes_per_level must be >= 1");
  if (c.script_host.empty()) throw ConfigError("synthesis.script_host must not be empty");
  if (c.serve_port < 0 || c.serve_port > 65535) throw ConfigError("serve.port out of range");
  if (c.provider.kind == "mock" && c.provider.mock_file.empty()) {
    throw ConfigError("provider.mock_file is required for the mock provider");
  }
  c.override_seed(c.seed);
  return c;
}

PipelineConfig PipelineConfig::load(const Path& file) {
  Document doc;
  try {
    doc = parse_document(read_file(file));
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + file.string() + ": " + e.what());
  }
  return from_document(doc, std::filesystem::absolute(file).parent_path());
}

void PipelineConfig::override_seed(std::uint64_t value) {
  seed = value;
  if (!calibration_seed_set) calibration.seed = value;
  for (auto& [name, ds] : datasets) {
    if (!dataset_seed_set[name]) ds.dataset_seed = value;
  }
}

Document PipelineConfig::to_document() const {
  Document datasets_doc = Document::object();
  for (const auto& [name, ds] : datasets) datasets_doc[name] = ds.to_document();
  Document provider_doc{{"kind", provider.kind},
                        {"max_retries", provider.max_retries},
                        {"retry_backoff_ms", provider.retry_backoff_ms},
                        {"rate_per_second", provider.rate_per_second},
                        {"burst", provider.burst}};
  if (provider.kind == "mock") {
    provider_doc["mock_file"] = provider.mock_file.filename().string();
  } else {
    provider_doc["live"] = provider.live.to_document();
  }
  Document embedder_doc{{"kind", embedder.kind}, {"dimension", embedder.dimension}};
  if (embedder.kind == "remote") embedder_doc["remote"] = embedder.remote.to_document();
  return Document{
      {"seed", seed},
      {"workers", workers},
      {"provider", provider_doc},
      {"sampling", sampling.to_document()},
      {"sandbox", sandbox.to_document()},
      {"keywords", {{"include_builtin", include_builtin_keywords}, {"extra", extra_keywords}}},
      {"synthesis",
       {{"attempts_per_keyword", attempts_per_keyword},
        {"script_host", script_host},
        {"prompt_dir", prompt_dir ? Document(prompt_dir->filename().string()) : Document(nullptr)}}},
      {"judge", {{"smoke_test", smoke_test}, {"probes_per_level", probes_per_level}}},
      {"calibration", calibration.to_document()},
      {"datasets", datasets_doc},
      {"entropy",
       {{"dataset", entropy_dataset},
        {"batch_size", descriptor_batch},
        {"embedder", embedder_doc},
        {"taus", taus},
        {"linkage", "single"}}},
      {"serve", {{"port", serve_port}, {"dataset", serve_dataset}}}};
}

}  // namespace envforge::pipeline
