#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dcan::rf {

// One convolution path: kernel taps spaced `dilation` apart, centered.
struct Path {
  int kernel = 3;
  int dilation = 1;
};

// A layer is the union of its parallel paths' offset sets. A plain
// convolution has one path; an MPTC contributes long path (step r), short
// path (step 1) and the shortcut ({0}).
struct LayerSpec {
  std::string label;
  std::vector<Path> paths;

  static LayerSpec single(int kernel, int dilation, std::string label = "");
  static LayerSpec mptc(int long_dilation, std::string label = "");

  std::vector<int> offsets() const;
};

// Set of input offsets reachable from one output position.
struct ReceptiveField {
  std::vector<int> offsets;  // sorted, unique

  int min() const { return offsets.front(); }
  int max() const { return offsets.back(); }
  int width() const { return max() - min() + 1; }
};

struct ContiguityReport {
  bool contiguous = true;
  std::vector<int> holes;  // missing integers inside [min, max]
};

// Iterated Minkowski sum of the stack's per-layer offset sets. The analysis
// ignores zero-padding edge effects: contiguity is a kernel-support property.
ReceptiveField propagate(const std::vector<LayerSpec>& stack);

ContiguityReport check_contiguity(const ReceptiveField& rf);

struct StackAnalysis {
  struct Row {
    std::string label;
    std::size_t paths = 0;
    int cumulative_width = 0;
    bool contiguous = true;
    std::size_t hole_count = 0;
  };
  std::vector<Row> rows;
  ReceptiveField field;
  ContiguityReport report;
};

StackAnalysis analyze(const std::vector<LayerSpec>& stack);

// Aligned text table with per-layer cumulative spans and the final verdict.
std::string format_report(const StackAnalysis& a);

// Stack builders mirroring the network layout.
std::vector<LayerSpec> base_stack(std::size_t n_base);
std::vector<LayerSpec> mtca_stack(std::size_t n_b, std::size_t r_smooth,
                                  bool include_smooth = true);
// Long-path-only dilated stack with dilations 2^1..2^n_b: the gridding
// ablation the full model is compared against.
std::vector<LayerSpec> e_only_long_path_stack(std::size_t n_b);

inline std::vector<LayerSpec> concat_stacks(std::vector<LayerSpec> a,
                                            const std::vector<LayerSpec>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace dcan::rf
