#include "analysis.hpp"

#include <algorithm>
#include <sstream>

#include "csv.hpp"

namespace densedyn::cli {

namespace fs = std::filesystem;

std::optional<RunConfig> recorded_config(const TraceManifest& manifest, std::string* why) {
  const std::string text = manifest.config_value("run_config");
  if (text.empty()) {
    if (why) *why = "the trace records no run configuration";
    return std::nullopt;
  }
  try {
    return parse_run_config(text, "manifest run_config", fs::current_path());
  } catch (const ConfigError& e) {
    if (why) *why = e.what();
    return std::nullopt;
  }
}

namespace {

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
  return out + "\n";
}

std::string optional_epoch(const std::optional<int>& e) { return e ? std::to_string(*e) : std::string(); }

// Fits K = 1..k_max as select_component_count does, keeping the best attempt of a K that fails to converge.
void fit_curve(AnalysisReport& r, int k_max, std::ostream& log) {
  const int n = static_cast<int>(r.accuracy.size());
  const int k_fit = std::min(k_max, (n - 2) / 3);
  if (k_fit < 1) {
    log << "lld: " << n << " epochs are too few for a logistic fit\n";
    return;
  }
  for (int k = 1; k <= k_fit; ++k) {
    const LldFit* warm = k > 1 ? &r.fits.back() : nullptr;
    try {
      r.fits.push_back(fit_logistic_mixture(r.accuracy, k, {}, warm));
    } catch (const LldFitError& e) {
      log << "lld: K=" << k << " did not converge; keeping the lowest-SSE attempt\n";
      r.fits.push_back(e.best_partial());
    }
    r.bic.push_back(lld_bic(r.fits.back(), r.accuracy.size()));
  }
  r.best_k = 1;
  for (int k = 2; k <= k_fit; ++k)
    if (r.bic[static_cast<std::size_t>(k - 1)] < r.bic[static_cast<std::size_t>(r.best_k - 1)]) r.best_k = k;
}

void write_curve(const TraceReader& reader, const fs::path& out) {
  std::string text = "epoch,loss,accuracy,heldout_accuracy\n";
  for (std::size_t e = 0; e < reader.epoch_count(); ++e) {
    const EpochTrace& s = reader.scalars(e);
    text += join({std::to_string(s.epoch), csv_number(s.train_loss), csv_number(s.accuracy),
                  csv_number(s.heldout_accuracy)});
  }
  write_text(out / "curve.csv", text);
}

void write_lld(const AnalysisReport& r, const fs::path& out) {
  std::string text = "k,selected,converged,sse,r2,bic,y0,component,a,b,t0\n";
  for (std::size_t i = 0; i < r.fits.size(); ++i) {
    const LldFit& f = r.fits[i];
    const std::vector<std::string> head = {std::to_string(i + 1), static_cast<int>(i + 1) == r.best_k ? "1" : "0",
                                           f.converged ? "1" : "0", csv_number(f.sse), csv_number(f.r2),
                                           csv_number(r.bic[i]), csv_number(f.y0)};
    for (std::size_t c = 0; c < f.components.size(); ++c) {
      auto row = head;
      row.push_back(std::to_string(c + 1));
      row.push_back(csv_number(f.components[c].a));
      row.push_back(csv_number(f.components[c].b));
      row.push_back(csv_number(f.components[c].t0));
      text += join(row);
    }
  }
  write_text(out / "lld.csv", text);

  std::vector<std::string> header = {"epoch", "data"};
  const LldFit* best = r.best_k > 0 ? &r.fits[static_cast<std::size_t>(r.best_k - 1)] : nullptr;
  if (best) {
    header.push_back("fit");
    for (std::size_t c = 0; c < best->components.size(); ++c) header.push_back("component_" + std::to_string(c + 1));
  }
  text = join(header);
  for (std::size_t t = 0; t < r.accuracy.size(); ++t) {
    std::vector<std::string> row = {std::to_string(r.epochs[t]), csv_number(r.accuracy[t])};
    if (best) {
      const double x = static_cast<double>(t);
      row.push_back(csv_number(best->predict(x)));
      for (std::size_t c = 0; c < best->components.size(); ++c) row.push_back(csv_number(best->component(c, x)));
    }
    text += join(row);
  }
  write_text(out / "lld_curve.csv", text);
}

void write_changepoints(const AnalysisReport& r, const std::vector<std::string>& names, const fs::path& out) {
  std::string text = "class,name,epoch,statistic\n";
  for (const Changepoint& c : r.crystallization.per_class)
    text += join({std::to_string(c.class_id), names.at(static_cast<std::size_t>(c.class_id)), optional_epoch(c.epoch),
                  csv_number(c.statistic)});
  const Changepoint& o = r.crystallization.overall;
  text += join({"overall", o.class_id >= 0 ? names.at(static_cast<std::size_t>(o.class_id)) : "",
                optional_epoch(o.epoch), csv_number(o.statistic)});
  write_text(out / "changepoints.csv", text);
}

void write_trajectory(const AnalysisReport& r, std::size_t num_classes, const fs::path& out) {
  std::vector<std::string> header = {"epoch", "pc", "eigenvalue", "variance_fraction", "alignment_dot", "source_rank"};
  for (std::size_t k = 0; k < num_classes; ++k) header.push_back("class_mean_" + std::to_string(k));
  std::string text = join(header);
  if (r.trajectory) {
    const PcTrajectory& t = *r.trajectory;
    for (std::size_t e = 0; e < t.epochs.size(); ++e)
      for (std::size_t c = 0; c < t.n_components; ++c) {
        std::vector<std::string> row = {std::to_string(t.epochs[e]),          std::to_string(c + 1),
                                        csv_number(t.eigenvalue[e][c]),       csv_number(t.variance_fraction[e][c]),
                                        csv_number(t.alignment_dot[e][c]),    std::to_string(t.source_rank[e][c] + 1)};
        for (std::size_t k = 0; k < num_classes; ++k) row.push_back(csv_number(t.class_mean_score[e][c][k]));
        text += join(row);
      }
  }
  write_text(out / "pca_trajectory.csv", text);
}

std::string summary_text(const AnalysisReport& r, const TraceReader& reader) {
  const auto& names = reader.manifest().class_names;
  std::ostringstream o;
  o << "epochs: " << r.epochs.size() << "\n";
  if (!r.epochs.empty()) {
    const EpochTrace& last = reader.scalars(reader.epoch_count() - 1);
    o << "final accuracy: " << format_number(last.accuracy) << "\n";
    o << "final heldout accuracy: " << format_number(last.heldout_accuracy) << "\n";
  }
  if (r.fits.empty()) {
    o << "lld: skipped (curve too short)\n";
  } else {
    o << "lld K*: " << r.best_k << "\n";
    for (std::size_t i = 0; i < r.fits.size(); ++i)
      o << "lld K=" << i + 1 << ": r2 " << format_number(r.fits[i].r2) << " sse " << format_number(r.fits[i].sse)
        << " bic " << format_number(r.bic[i]) << (r.fits[i].converged ? "" : " (not converged)") << "\n";
  }
  for (const Changepoint& c : r.crystallization.per_class)
    o << "change-point " << names.at(static_cast<std::size_t>(c.class_id)) << ": "
      << (c.epoch ? std::to_string(*c.epoch) : "none") << "\n";
  const Changepoint& ov = r.crystallization.overall;
  if (ov.epoch) {
    o << "overall change-point: " << *ov.epoch << " (" << names.at(static_cast<std::size_t>(ov.class_id)) << ")\n";
  } else {
    o << "overall change-point: none\n";
  }
  o << "classes crystallizing after the first: " << r.classes_after_first << "\n";
  if (r.pc1_peak_epoch) o << "pc1 peak epoch: " << *r.pc1_peak_epoch << "\n";
  if (!r.asymptote_variance_fraction.empty()) {
    double total = 0.0;
    for (double f : r.asymptote_variance_fraction) total += f;
    o << "top-" << r.asymptote_variance_fraction.size() << " pca variance at asymptote: " << format_number(total)
      << " (";
    for (std::size_t i = 0; i < r.asymptote_variance_fraction.size(); ++i)
      o << (i ? " " : "") << format_number(r.asymptote_variance_fraction[i]);
    o << ")\n";
    o << "pca2d separation at asymptote: " << format_number(r.asymptote_separation) << "\n";
  }
  o << "variance maps: " << r.variance_maps << "\n";
  return o.str();
}

}  // namespace

AnalysisReport run_analysis(const fs::path& trace_dir, const fs::path& out_dir, std::ostream& log) {
  const TraceReader reader(trace_dir);
  const TraceManifest& manifest = reader.manifest();
  const std::size_t num_classes = manifest.class_names.size();
  std::string why;
  const std::optional<RunConfig> config = recorded_config(manifest, &why);
  const AnalysisConfig settings = config ? config->analysis : AnalysisConfig{};
  if (!config) log << "analyze: using default analysis settings: " << why << "\n";
  fs::create_directories(out_dir);

  AnalysisReport r;
  std::vector<std::vector<double>> recall;
  for (std::size_t e = 0; e < reader.epoch_count(); ++e) {
    const EpochTrace& s = reader.scalars(e);
    r.epochs.push_back(s.epoch);
    r.accuracy.push_back(s.accuracy);
    recall.push_back(s.per_class_recall);
  }
  write_curve(reader, out_dir);

  fit_curve(r, settings.k_max, log);
  write_lld(r, out_dir);

  r.crystallization = detect_crystallization(recall, r.epochs, settings.theta, settings.window);
  r.classes_after_first = classes_after_first(r.crystallization);
  write_changepoints(r, manifest.class_names, out_dir);

  // Hidden activations for every epoch; conv blocks and weights are consumed one epoch at a time.
  TraceParts hidden_only;
  hidden_only.conv = hidden_only.logits = hidden_only.weights = false;
  TraceParts conv_only;
  conv_only.hidden = conv_only.logits = false;
  std::vector<Tensor> hidden;
  std::string pca2d = "epoch,probe,label,pc1,pc2\n";
  std::string separation = "epoch,separation,variance_pc1,variance_pc2\n";
  std::string corr = "epoch,layer_a,layer_b,activation,weight\n";
  const std::size_t last = reader.epoch_count() == 0 ? 0 : reader.epoch_count() - 1;
  std::vector<std::size_t> scatter_epochs;
  if (reader.epoch_count() > 0) scatter_epochs = {0, last};
  if (r.crystallization.overall.epoch) {
    for (std::size_t e = 0; e < reader.epoch_count(); ++e)
      if (r.epochs[e] == *r.crystallization.overall.epoch) scatter_epochs.push_back(e);
  }
  std::sort(scatter_epochs.begin(), scatter_epochs.end());
  scatter_epochs.erase(std::unique(scatter_epochs.begin(), scatter_epochs.end()), scatter_epochs.end());

  for (std::size_t e = 0; e < reader.epoch_count(); ++e) {
    EpochTrace t = reader.epoch(e, hidden_only);
    const Projection2d proj = project_2d(t.hidden_probe, t.probe_labels, num_classes);
    separation += join({std::to_string(t.epoch), csv_number(proj.separation), csv_number(proj.variance_explained[0]),
                        csv_number(proj.variance_explained[1])});
    if (std::binary_search(scatter_epochs.begin(), scatter_epochs.end(), e)) {
      for (std::size_t p = 0; p < proj.points.size(); ++p)
        pca2d += join({std::to_string(t.epoch), manifest.probe_ids.at(p), std::to_string(proj.labels[p]),
                       csv_number(proj.points[p][0]), csv_number(proj.points[p][1])});
    }
    if (e == last) r.asymptote_separation = proj.separation;
    hidden.push_back(std::move(t.hidden_probe));

    const EpochTrace c = reader.epoch(e, conv_only);
    const CorrMatrix act = layer_pair_correlation(c.conv_probe);
    const CorrMatrix wt = weight_pair_correlation(c.conv_weights);
    const std::size_t layers = c.conv_probe.size();
    for (std::size_t a = 0; a < layers; ++a)
      for (std::size_t b = a + 1; b < layers; ++b) {
        const auto& av = act[a * layers + b];
        const auto& wv = wt[a * layers + b];
        corr += join({std::to_string(c.epoch), std::to_string(a + 1), std::to_string(b + 1),
                      av ? csv_number(*av) : std::string(), wv ? csv_number(*wv) : std::string()});
      }
  }
  write_text(out_dir / "pca2d.csv", pca2d);
  write_text(out_dir / "pca2d_separation.csv", separation);
  write_text(out_dir / "layer_corr.csv", corr);

  if (hidden.size() >= 2) {
    PcTrajectoryOptions opt;
    opt.n_components = std::min(settings.n_components, hidden.front().dim(1));
    opt.alignment = settings.alignment;
    r.trajectory = pc_trajectory(hidden, r.epochs, manifest.probe_labels, num_classes, opt);
    std::size_t peak = 0;
    for (std::size_t e = 1; e < r.trajectory->epochs.size(); ++e)
      if (r.trajectory->eigenvalue[e][0] > r.trajectory->eigenvalue[peak][0]) peak = e;
    r.pc1_peak_epoch = r.trajectory->epochs[peak];
  }
  if (!hidden.empty()) {
    const std::size_t n = std::min(settings.n_components, hidden.back().dim(1));
    const PcaResult asym = pca(hidden.back(), n, PcaOptions{.require_rank = false});
    r.asymptote_variance_fraction = asym.variance_explained;
  }
  write_trajectory(r, num_classes, out_dir);

  const fs::path maps = out_dir / "variance_maps";
  fs::remove_all(maps);
  if (!config) {
    r.variance_maps = "skipped (" + why + ")";
  } else {
    try {
      const DenseDataset data = load_dataset(*config);
      std::string index = "class,name,mean,max\n";
      for (std::size_t k = 0; k < data.num_classes(); ++k) {
        const Tensor map = pixel_variance_map(data, static_cast<int>(k));
        const std::size_t h = map.dim(0), w = map.dim(1);
        std::string text;
        for (std::size_t x = 0; x < w; ++x) text += (x ? ",c" : "c") + std::to_string(x);
        text += "\n";
        double sum = 0.0, peak = 0.0;
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            const double v = map[y * w + x];
            sum += v;
            peak = std::max(peak, v);
            text += (x ? "," : "") + csv_number(v);
          }
          text += "\n";
        }
        write_text(maps / ("class_" + std::to_string(k) + ".csv"), text);
        index += join({std::to_string(k), data.class_names[k], csv_number(sum / static_cast<double>(h * w)),
                       csv_number(peak)});
      }
      write_text(maps / "index.csv", index);
      r.variance_maps = "written";
    } catch (const std::exception& e) {
      r.variance_maps = std::string("skipped (dataset unavailable: ") + e.what() + ")";
    }
  }
  if (r.variance_maps != "written") log << "analyze: variance maps " << r.variance_maps << "\n";

  write_text(out_dir / "summary.txt", summary_text(r, reader));
  return r;
}

}  // namespace densedyn::cli
