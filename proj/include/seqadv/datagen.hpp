#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqadv/image.hpp"
#include "seqadv/rng.hpp"

namespace seqadv::datagen {

constexpr std::size_t kCanvas = 32;
constexpr int kQuestionFrames = 5;  // T
constexpr int kCandidateCount = 5;  // K
constexpr int kLabelWidth = 16;     // 4 quadrants x {h/v, slanted, curved, filled}

// ---- transformation programs ------------------------------------------------
// Components sit on a 3x3 slot grid (4 corners, 4 side midpoints, 1 center),
// each slot a 10x10 cell inside a 1-px blank canvas border. Rendering is
// binary, integer-exact, and a pure function of (program, timestep).

enum class ShapeKind { tick = 0, arrow = 1, polygon = 2, dash = 3 };

enum class RuleKind {
  rotate_k90 = 0,       // param: quarter turns per application
  increment_count = 1,  // param: modulus m, count cycles 1..m
  toggle_fill = 2,      // param unused
  alternate_side = 3,   // param unused; slot swaps with alt_slot
  translate_path = 4,   // param: +1/-1 step around the 8 perimeter slots
};

struct Rule {
  RuleKind kind;
  int param = 0;
  int every = 1;  // apply once per `every` steps (change_every_n)
};

struct Component {
  int slot = 0;      // 0..8, row-major on the 3x3 grid
  int alt_slot = 0;  // partner slot for alternate_side
  ShapeKind shape = ShapeKind::tick;
  int count = 1;    // 1..4 parallel strokes (tick/dash)
  int orient = 0;   // quarter turns of the canonical cell rendering
  int variant = 0;  // polygon: 0 square, 1 diamond, 2 triangle
  bool filled = false;
  std::vector<Rule> rules;
};

struct TransformProgram {
  std::vector<Component> components;
};

// Component state after the rules have acted for timestep t (1-based).
struct ComponentState {
  int slot;
  int count;
  int orient;
  bool filled;
};
ComponentState state_at(const Component& c, int t);

// ---- dihedral-8 --------------------------------------------------------------
// Element R^rot . M^mirror (mirror first): rot quarter turns clockwise after an
// optional horizontal flip.

struct Dihedral {
  int rot = 0;
  bool mirror = false;
};

inline bool operator==(const Dihedral& a, const Dihedral& b) {
  return a.rot == b.rot && a.mirror == b.mirror;
}

Dihedral dihedral_element(int i);            // i in 0..7
Dihedral compose(Dihedral h, Dihedral g);    // h after g
Frame apply_dihedral(const Frame& f, Dihedral g);
int quadrant_map(Dihedral g, int q);         // where quadrant q lands

// ---- rendering and labels ----------------------------------------------------

Frame render(const TransformProgram& p, int t);

using Labels = std::array<double, kLabelWidth>;

// Quadrant-attributed element counts for frame t, optionally for the
// g-transformed rendering. Corner slots attribute to their quadrant, side
// slots half to each straddled quadrant, the center a quarter to each.
Labels labels16(const TransformProgram& p, int t, Dihedral g = {});

// ---- problems ----------------------------------------------------------------

struct SequenceProblem {
  std::uint64_t id = 0;
  std::vector<Frame> question;    // T frames
  std::vector<Frame> candidates;  // K frames
  int answer_index = 0;
  std::vector<Labels> labels;     // per question frame
  TransformProgram program;
  Dihedral aug;                   // group element already applied to the frames
};

// difficulty 1..3 = number of simultaneously varying components.
TransformProgram sample_program(Rng& rng, int difficulty);

// Question = frames 1..5, answer = frame 6. Distractors: copy of frame 5, a
// one-parameter-perturbed program's frame 6, the true frame 7, and a foreign
// program's frame 6.
SequenceProblem render_problem(const TransformProgram& p, Rng& rng);

SequenceProblem augment(const SequenceProblem& p, Dihedral g);

// ---- moving sprites ----------------------------------------------------------

struct SpriteConfig {
  std::size_t extent = 32;
  int frames = 11;
  int min_sprites = 1;
  int max_sprites = 2;
  int sprite_size = 8;
};

struct Sprite {
  int glyph;
  int x, y;    // top-left
  int vx, vy;  // each in {-2,-1,1,2}
};

struct MovingSpriteVideo {
  std::uint64_t id = 0;
  std::vector<Frame> frames;
  std::vector<Sprite> initial;
};

MovingSpriteVideo gen_moving_sprites(Rng& rng, const SpriteConfig& cfg = {});

// ---- persistence ---------------------------------------------------------------
// manifest.txt: one problem per line, `id<TAB>T<TAB>K<TAB>answer<TAB>descriptor`;
// frames as binary PGM `<id>_q<t>.pgm` / `<id>_c<k>.pgm`. Videos use
// `id<TAB>num_frames` and `<id>_f<t>.pgm`.

std::string encode_program(const TransformProgram& p, Dihedral aug);
std::pair<TransformProgram, Dihedral> parse_program(const std::string& text);

void write_problems(const std::filesystem::path& dir, const std::vector<SequenceProblem>& ps);
std::vector<SequenceProblem> read_problems(const std::filesystem::path& dir);
void write_videos(const std::filesystem::path& dir, const std::vector<MovingSpriteVideo>& vs);
std::vector<MovingSpriteVideo> read_videos(const std::filesystem::path& dir);

// ---- bulk generation -----------------------------------------------------------
// Each base problem owns rng stream `seed.stream(base_id)`, so generation is
// order-independent and parallelizable. With augment8, ids are base*8 + g.

std::vector<SequenceProblem> generate_problems(std::uint64_t seed, std::size_t base_count,
                                               int difficulty, bool augment8);
std::vector<MovingSpriteVideo> generate_videos(std::uint64_t seed, std::size_t count,
                                               const SpriteConfig& cfg = {});

}  // namespace seqadv::datagen
