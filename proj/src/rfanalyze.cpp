#include "dcan/rfanalyze.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "dcan/errors.hpp"

namespace dcan::rf {

LayerSpec LayerSpec::single(int kernel, int dilation, std::string label) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("rf: kernel must be odd and positive");
  }
  if (dilation < 1) throw ConfigError("rf: dilation must be >= 1");
  if (label.empty()) {
    label = "conv(k" + std::to_string(kernel) + ",r" + std::to_string(dilation) + ")";
  }
  return LayerSpec{std::move(label), {Path{kernel, dilation}}};
}

LayerSpec LayerSpec::mptc(int long_dilation, std::string label) {
  if (long_dilation < 1) throw ConfigError("rf: dilation must be >= 1");
  if (label.empty()) label = "mptc(r" + std::to_string(long_dilation) + ")";
  // Long path, short path, shortcut (kernel 1 == offset {0}).
  return LayerSpec{std::move(label),
                   {Path{3, long_dilation}, Path{3, 1}, Path{1, 1}}};
}

std::vector<int> LayerSpec::offsets() const {
  std::set<int> s;
  for (const Path& p : paths) {
    const int half = p.kernel / 2;
    for (int i = -half; i <= half; ++i) s.insert(i * p.dilation);
  }
  return {s.begin(), s.end()};
}

ReceptiveField propagate(const std::vector<LayerSpec>& stack) {
  if (stack.empty()) throw ConfigError("rf: empty stack");
  // Dense boolean representation over the reachable span; the Minkowski sum
  // of each layer's offsets is an OR-convolution over that span.
  long reach_lo = 0, reach_hi = 0;
  for (const LayerSpec& l : stack) {
    const auto offs = l.offsets();
    reach_lo += offs.front();
    reach_hi += offs.back();
  }
  const long span = reach_hi - reach_lo + 1;
  std::vector<char> cur(static_cast<std::size_t>(span), 0);
  const long origin = -reach_lo;  // index of offset 0
  cur[static_cast<std::size_t>(origin)] = 1;

  for (const LayerSpec& l : stack) {
    std::vector<char> next(cur.size(), 0);
    for (int off : l.offsets()) {
      for (long i = 0; i < span; ++i) {
        if (!cur[static_cast<std::size_t>(i)]) continue;
        const long j = i + off;
        if (j >= 0 && j < span) next[static_cast<std::size_t>(j)] = 1;
      }
    }
    cur = std::move(next);
  }

  ReceptiveField rf;
  for (long i = 0; i < span; ++i) {
    if (cur[static_cast<std::size_t>(i)]) {
      rf.offsets.push_back(static_cast<int>(i - origin));
    }
  }
  return rf;
}

ContiguityReport check_contiguity(const ReceptiveField& rf) {
  ContiguityReport rep;
  if (rf.offsets.empty()) return rep;
  std::size_t k = 0;
  for (int v = rf.min(); v <= rf.max(); ++v) {
    if (k < rf.offsets.size() && rf.offsets[k] == v) {
      ++k;
    } else {
      rep.holes.push_back(v);
    }
  }
  rep.contiguous = rep.holes.empty();
  return rep;
}

StackAnalysis analyze(const std::vector<LayerSpec>& stack) {
  StackAnalysis a;
  std::vector<LayerSpec> prefix;
  prefix.reserve(stack.size());
  for (const LayerSpec& l : stack) {
    prefix.push_back(l);
    const ReceptiveField rf = propagate(prefix);
    const ContiguityReport rep = check_contiguity(rf);
    a.rows.push_back(StackAnalysis::Row{l.label, l.paths.size(), rf.width(),
                                        rep.contiguous, rep.holes.size()});
  }
  a.field = propagate(stack);
  a.report = check_contiguity(a.field);
  return a;
}

std::string format_report(const StackAnalysis& a) {
  std::ostringstream os;
  os << "receptive-field analysis (zero padding ignored: contiguity is a "
        "kernel-support property)\n";
  os << std::left << std::setw(24) << "layer" << std::right << std::setw(7)
     << "paths" << std::setw(11) << "cum_width" << std::setw(12) << "contiguous"
     << std::setw(8) << "holes" << "\n";
  for (const auto& row : a.rows) {
    os << std::left << std::setw(24) << row.label << std::right << std::setw(7)
       << row.paths << std::setw(11) << row.cumulative_width << std::setw(12)
       << (row.contiguous ? "yes" : "NO") << std::setw(8) << row.hole_count
       << "\n";
  }
  os << "total width " << a.field.width() << ", "
     << (a.report.contiguous ? "contiguous" : "NON-CONTIGUOUS") << "\n";
  if (!a.report.contiguous) {
    os << "holes (" << a.report.holes.size() << "):";
    for (int h : a.report.holes) os << " " << h;
    os << "\n";
  }
  return os.str();
}

std::vector<LayerSpec> base_stack(std::size_t n_base) {
  std::vector<LayerSpec> stack;
  for (std::size_t i = 0; i < n_base; ++i) {
    stack.push_back(LayerSpec::single(3, 1, "base.conv" + std::to_string(i)));
  }
  return stack;
}

std::vector<LayerSpec> mtca_stack(std::size_t n_b, std::size_t r_smooth,
                                  bool include_smooth) {
  std::vector<LayerSpec> stack;
  int dilation = 2;
  for (std::size_t i = 1; i <= n_b; ++i) {
    stack.push_back(
        LayerSpec::mptc(dilation, "mptc_e" + std::to_string(dilation)));
    if (include_smooth) {
      stack.push_back(LayerSpec::mptc(static_cast<int>(r_smooth),
                                      "mptc_s" + std::to_string(r_smooth)));
    }
    dilation *= 2;
  }
  return stack;
}

std::vector<LayerSpec> e_only_long_path_stack(std::size_t n_b) {
  std::vector<LayerSpec> stack;
  int dilation = 2;
  for (std::size_t i = 1; i <= n_b; ++i) {
    stack.push_back(
        LayerSpec::single(3, dilation, "dilated" + std::to_string(dilation)));
    dilation *= 2;
  }
  return stack;
}

}  // namespace dcan::rf
