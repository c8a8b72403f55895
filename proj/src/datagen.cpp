#include "seqadv/datagen.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "seqadv/errors.hpp"
#include "seqadv/parallel.hpp"

namespace seqadv::datagen {

namespace {

constexpr int kCell = 10;  // slot cell extent; slots tile [1..30] of the canvas

int slot_row(int s) { return s / 3; }
int slot_col(int s) { return s % 3; }
int slot_of(int r, int c) { return r * 3 + c; }

// Perimeter slots in clockwise order, for translate_path.
constexpr int kPerimeter[8] = {0, 1, 2, 5, 8, 7, 6, 3};

int perimeter_index(int slot) {
  for (int i = 0; i < 8; ++i)
    if (kPerimeter[i] == slot) return i;
  throw DataError("translate_path on the center slot");
}

int mod(int a, int m) { return ((a % m) + m) % m; }

using Cell = std::array<std::uint8_t, kCell * kCell>;

void cell_set(Cell& c, int x, int y) {
  if (x >= 0 && x < kCell && y >= 0 && y < kCell) c[static_cast<std::size_t>(y * kCell + x)] = 1;
}

Cell rotate_cell(const Cell& in, int quarter_turns) {
  Cell out = in;
  for (int k = 0; k < mod(quarter_turns, 4); ++k) {
    Cell next{};
    for (int y = 0; y < kCell; ++y)
      for (int x = 0; x < kCell; ++x)
        if (out[static_cast<std::size_t>(y * kCell + x)])
          next[static_cast<std::size_t>(x * kCell + (kCell - 1 - y))] = 1;
    out = next;
  }
  return out;
}

Cell render_cell(ShapeKind shape, int count, int variant, bool filled) {
  Cell c{};
  switch (shape) {
    case ShapeKind::tick:  // parallel '/' strokes
      for (int i = 0; i < count; ++i)
        for (int j = 0; j < 4; ++j) cell_set(c, 2 * i + j, 8 - j);
      break;
    case ShapeKind::dash:  // parallel horizontal strokes
      for (int i = 0; i < count; ++i)
        for (int x = 1; x <= 8; ++x) cell_set(c, x, 1 + 2 * i);
      break;
    case ShapeKind::arrow:  // east-pointing shaft with a two-stroke head
      for (int x = 1; x <= 8; ++x) cell_set(c, x, 4);
      for (int j = 1; j <= 2; ++j) {
        cell_set(c, 8 - j, 4 - j);
        cell_set(c, 8 - j, 4 + j);
      }
      break;
    case ShapeKind::polygon:
      if (variant == 0) {  // square
        for (int x = 1; x <= 8; ++x) {
          cell_set(c, x, 1);
          cell_set(c, x, 8);
        }
        for (int y = 1; y <= 8; ++y) {
          cell_set(c, 1, y);
          cell_set(c, 8, y);
        }
        if (filled)
          for (int y = 2; y <= 7; ++y)
            for (int x = 2; x <= 7; ++x) cell_set(c, x, y);
      } else if (variant == 1) {  // diamond, vertices (4,1),(8,5),(4,9),(0,5)
        for (int y = 1; y <= 9; ++y)
          for (int x = 0; x <= 8; ++x) {
            const int d = std::abs(x - 4) + std::abs(y - 5);
            if (d == 4) cell_set(c, x, y);
            if (filled && d < 4) cell_set(c, x, y);
          }
      } else {  // right triangle, vertices (1,1),(1,8),(8,8)
        for (int y = 1; y <= 8; ++y) cell_set(c, 1, y);
        for (int x = 1; x <= 8; ++x) cell_set(c, x, 8);
        for (int j = 1; j <= 8; ++j) cell_set(c, j, j);
        if (filled)
          for (int x = 2; x <= 7; ++x)
            for (int y = x + 1; y <= 7; ++y) cell_set(c, x, y);
      }
      break;
  }
  return c;
}

}  // namespace

ComponentState state_at(const Component& c, int t) {
  const int steps = t - 1;
  ComponentState s{c.slot, c.count, c.orient, c.filled};
  for (const Rule& r : c.rules) {
    const int applied = steps / std::max(1, r.every);
    switch (r.kind) {
      case RuleKind::rotate_k90:
        s.orient = mod(s.orient + r.param * applied, 4);
        break;
      case RuleKind::increment_count:
        s.count = mod(s.count - 1 + applied, r.param) + 1;
        break;
      case RuleKind::toggle_fill:
        if (applied % 2) s.filled = !s.filled;
        break;
      case RuleKind::alternate_side:
        if (applied % 2) s.slot = c.alt_slot;
        break;
      case RuleKind::translate_path:
        s.slot = kPerimeter[mod(perimeter_index(c.slot) + r.param * applied, 8)];
        break;
    }
  }
  return s;
}

Dihedral dihedral_element(int i) { return Dihedral{i % 4, i >= 4}; }

Dihedral compose(Dihedral h, Dihedral g) {
  Dihedral out;
  out.rot = mod(h.rot + (h.mirror ? mod(-g.rot, 4) : g.rot), 4);
  out.mirror = h.mirror != g.mirror;
  return out;
}

Frame apply_dihedral(const Frame& f, Dihedral g) {
  if (f.h != f.w) throw ShapeError("apply_dihedral: frame must be square");
  const int n = static_cast<int>(f.w);
  Frame out(f.h, f.w);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      int tx = g.mirror ? n - 1 - x : x;
      int ty = y;
      for (int k = 0; k < g.rot; ++k) {
        const int nx = n - 1 - ty;
        ty = tx;
        tx = nx;
      }
      out.set(static_cast<std::size_t>(ty), static_cast<std::size_t>(tx),
              f.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)));
    }
  return out;
}

int quadrant_map(Dihedral g, int q) {
  int qr = q / 2, qc = q % 2;
  if (g.mirror) qc = 1 - qc;
  for (int k = 0; k < g.rot; ++k) {
    const int nr = qc;
    qc = 1 - qr;
    qr = nr;
  }
  return qr * 2 + qc;
}

Frame render(const TransformProgram& p, int t) {
  Frame f(kCanvas, kCanvas, 0.0);
  for (const Component& comp : p.components) {
    const ComponentState s = state_at(comp, t);
    Cell cell = rotate_cell(render_cell(comp.shape, s.count, comp.variant, s.filled), s.orient);
    const int ox = 1 + kCell * slot_col(s.slot);
    const int oy = 1 + kCell * slot_row(s.slot);
    for (int y = 0; y < kCell; ++y)
      for (int x = 0; x < kCell; ++x)
        if (cell[static_cast<std::size_t>(y * kCell + x)])
          f.set(static_cast<std::size_t>(oy + y), static_cast<std::size_t>(ox + x), 1.0);
  }
  return f;
}

namespace {

// (type index, amount) contributed by one component state.
// Types: 0 h/v lines, 1 slanted lines, 2 curved lines, 3 filled regions.
void element_counts(const Component& c, const ComponentState& s, double out[4]) {
  out[0] = out[1] = out[2] = out[3] = 0.0;
  switch (c.shape) {
    case ShapeKind::tick:
      out[1] = s.count;
      break;
    case ShapeKind::dash:
      out[0] = s.count;
      break;
    case ShapeKind::arrow:
      out[0] = 1;
      out[1] = 2;
      break;
    case ShapeKind::polygon:
      if (c.variant == 0)
        out[0] = 4;
      else if (c.variant == 1)
        out[1] = 4;
      else {
        out[0] = 2;
        out[1] = 1;
      }
      if (s.filled) out[3] = 1;
      break;
  }
}

// Quadrant attribution weights for a slot: corners fully theirs, sides split
// across the two quadrants they straddle, the center across all four.
void slot_quadrants(int slot, std::pair<int, double> out[4], int& n) {
  const int r = slot_row(slot), c = slot_col(slot);
  if (r != 1 && c != 1) {
    out[0] = {(r / 2) * 2 + (c / 2), 1.0};
    n = 1;
  } else if (r == 1 && c == 1) {
    for (int q = 0; q < 4; ++q) out[q] = {q, 0.25};
    n = 4;
  } else if (r == 1) {  // left/right side
    const int qc = c / 2;
    out[0] = {qc, 0.5};
    out[1] = {2 + qc, 0.5};
    n = 2;
  } else {  // top/bottom side
    const int qr = r / 2;
    out[0] = {qr * 2, 0.5};
    out[1] = {qr * 2 + 1, 0.5};
    n = 2;
  }
}

}  // namespace

Labels labels16(const TransformProgram& p, int t, Dihedral g) {
  Labels out{};
  for (const Component& comp : p.components) {
    const ComponentState s = state_at(comp, t);
    double counts[4];
    element_counts(comp, s, counts);
    std::pair<int, double> quads[4];
    int nq = 0;
    slot_quadrants(s.slot, quads, nq);
    for (int i = 0; i < nq; ++i) {
      const int q = quadrant_map(g, quads[i].first);
      for (int type = 0; type < 4; ++type)
        out[static_cast<std::size_t>(q * 4 + type)] += quads[i].second * counts[type];
    }
  }
  return out;
}

namespace {

constexpr int kValidationHorizon = kQuestionFrames + 2;  // frames 1..7 must be distinct

bool frames_pairwise_distinct(const std::vector<Frame>& fs) {
  for (std::size_t i = 0; i < fs.size(); ++i)
    for (std::size_t j = i + 1; j < fs.size(); ++j)
      if (fs[i] == fs[j]) return false;
  return true;
}

bool program_valid(const TransformProgram& p) {
  std::vector<Frame> fs;
  for (int t = 1; t <= kValidationHorizon; ++t) fs.push_back(render(p, t));
  return frames_pairwise_distinct(fs);
}

ShapeKind random_shape(Rng& rng) { return static_cast<ShapeKind>(rng.uniform_int(4)); }

void sample_initial_state(Component& c, Rng& rng) {
  c.count = 1 + static_cast<int>(rng.uniform_int(3));  // 1..3 leaves headroom for increments
  c.orient = static_cast<int>(rng.uniform_int(4));
  c.variant = static_cast<int>(rng.uniform_int(3));
  c.filled = c.shape == ShapeKind::polygon && rng.bernoulli(0.5);
  if (c.shape == ShapeKind::arrow || c.shape == ShapeKind::polygon) c.count = 1;
}

// Mirror partner for alternate_side; axis 0 flips columns, 1 flips rows.
bool alternate_partner(int slot, int axis, int& alt) {
  const int r = slot_row(slot), c = slot_col(slot);
  if (axis == 0) {
    if (c == 1) return false;
    alt = slot_of(r, 2 - c);
  } else {
    if (r == 1) return false;
    alt = slot_of(2 - r, c);
  }
  return true;
}

// One random rule compatible with the component's shape and slot.
void attach_random_rule(Component& c, Rng& rng) {
  for (;;) {
    const int pick = static_cast<int>(rng.uniform_int(5));
    const int every = rng.bernoulli(0.3) ? 2 : 1;
    switch (pick) {
      case 0: {  // rotate
        if (c.shape == ShapeKind::polygon && c.variant != 2) break;  // square/diamond look fixed
        int k;
        if (c.shape == ShapeKind::tick || c.shape == ShapeKind::dash)
          k = rng.bernoulli(0.5) ? 1 : 3;  // visual period 2
        else
          k = 1 + static_cast<int>(rng.uniform_int(3));
        c.rules.push_back(Rule{RuleKind::rotate_k90, k, every});
        return;
      }
      case 1: {  // increment count
        if (c.shape != ShapeKind::tick && c.shape != ShapeKind::dash) break;
        const int m = rng.bernoulli(0.5) ? 3 : 4;
        c.count = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(m)));
        c.rules.push_back(Rule{RuleKind::increment_count, m, every});
        return;
      }
      case 2: {  // toggle fill
        if (c.shape != ShapeKind::polygon) break;
        c.rules.push_back(Rule{RuleKind::toggle_fill, 0, every});
        return;
      }
      case 3: {  // alternate side
        const int axis = static_cast<int>(rng.uniform_int(2));
        int alt;
        if (!alternate_partner(c.slot, axis, alt) && !alternate_partner(c.slot, 1 - axis, alt))
          break;
        c.alt_slot = alt;
        c.rules.push_back(Rule{RuleKind::alternate_side, 0, every});
        return;
      }
      case 4: {  // translate path
        if (c.slot == 4) break;
        c.rules.push_back(
            Rule{RuleKind::translate_path, rng.bernoulli(0.5) ? 1 : -1, every});
        return;
      }
    }
  }
}

// Rule bundles whose joint orbit is provably longer than the validation
// horizon; the primary varying component always carries one so a single
// varying component still yields seven distinct frames.
void attach_long_orbit_rules(Component& c, Rng& rng) {
  switch (rng.uniform_int(3)) {
    case 0:  // walk the perimeter: period 8
      c.shape = random_shape(rng);
      sample_initial_state(c, rng);
      c.rules.push_back(Rule{RuleKind::translate_path, rng.bernoulli(0.5) ? 1 : -1, 1});
      break;
    case 1:  // count mod 3 each step + slow rotation: period 12
      c.shape = rng.bernoulli(0.5) ? ShapeKind::tick : ShapeKind::dash;
      sample_initial_state(c, rng);
      c.count = 1 + static_cast<int>(rng.uniform_int(3));
      c.rules.push_back(Rule{RuleKind::increment_count, 3, 1});
      c.rules.push_back(Rule{RuleKind::rotate_k90, rng.bernoulli(0.5) ? 1 : 3, 2});
      break;
    case 2:  // fill toggle each step + slow triangle rotation: period >= 8
      c.shape = ShapeKind::polygon;
      sample_initial_state(c, rng);
      c.variant = 2;
      c.rules.push_back(Rule{RuleKind::toggle_fill, 0, 1});
      c.rules.push_back(Rule{RuleKind::rotate_k90, 1 + static_cast<int>(rng.uniform_int(3)), 2});
      break;
  }
}

}  // namespace

TransformProgram sample_program(Rng& rng, int difficulty) {
  if (difficulty < 1 || difficulty > 3) throw UsageError("difficulty must be 1..3");
  const int n_vary = difficulty;

  for (int attempt = 0; attempt < 400; ++attempt) {
    const int n_static = static_cast<int>(rng.uniform_int(2));
    const int total = n_vary + n_static;

    // Varying components sit on perimeter slots so slot rules always apply;
    // statics may also take the center.
    std::array<int, 8> perimeter = {0, 1, 2, 5, 8, 7, 6, 3};
    for (int i = 7; i > 0; --i)
      std::swap(perimeter[static_cast<std::size_t>(i)],
                perimeter[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);

    // A single varying component must produce seven distinct frames on its
    // own, which needs a long-orbit rule bundle. With several varying
    // components each carries one simple rule and the joint state covers the
    // horizon; the validation below rejects aligned short cycles.
    TransformProgram p;
    for (int i = 0; i < total; ++i) {
      Component c;
      c.slot = c.alt_slot = perimeter[static_cast<std::size_t>(i)];
      if (i == 0 && n_vary == 1) {
        attach_long_orbit_rules(c, rng);
      } else if (i < n_vary) {
        c.shape = random_shape(rng);
        sample_initial_state(c, rng);
        attach_random_rule(c, rng);
      } else {
        c.shape = random_shape(rng);
        sample_initial_state(c, rng);
      }
      p.components.push_back(std::move(c));
    }

    if (program_valid(p)) return p;
  }
  throw DataError("sample_program: no valid program after 400 attempts");
}

namespace {

// Every program obtainable from p by flipping exactly one parameter of one
// rule. Some flips are visually idempotent at the answer timestep (orientation
// deltas can agree mod 4), so callers filter by the rendered result.
std::vector<TransformProgram> perturbation_candidates(const TransformProgram& p) {
  std::vector<TransformProgram> out;
  auto with_rule = [&](std::size_t ci, std::size_t ri, auto edit) {
    TransformProgram q = p;
    edit(q.components[ci].rules[ri]);
    out.push_back(std::move(q));
  };
  for (std::size_t ci = 0; ci < p.components.size(); ++ci) {
    const Component& c = p.components[ci];
    for (std::size_t ri = 0; ri < c.rules.size(); ++ri) {
      const Rule& r = c.rules[ri];
      with_rule(ci, ri, [](Rule& q) { q.every = q.every == 1 ? 2 : 1; });
      switch (r.kind) {
        case RuleKind::rotate_k90:
          if (c.shape == ShapeKind::tick || c.shape == ShapeKind::dash) {
            with_rule(ci, ri, [](Rule& q) { q.param = q.param == 1 ? 3 : 1; });
          } else {
            for (int k = 1; k <= 3; ++k)
              if (k != r.param)
                with_rule(ci, ri, [k](Rule& q) { q.param = k; });
          }
          break;
        case RuleKind::increment_count:
          with_rule(ci, ri, [](Rule& q) { q.param = q.param == 3 ? 4 : 3; });
          break;
        case RuleKind::translate_path:
          with_rule(ci, ri, [](Rule& q) { q.param = -q.param; });
          break;
        case RuleKind::toggle_fill:
        case RuleKind::alternate_side:
          break;  // only `every` to flip
      }
    }
  }
  return out;
}

}  // namespace

SequenceProblem render_problem(const TransformProgram& p, Rng& rng) {
  std::vector<Frame> fs;
  for (int t = 1; t <= kValidationHorizon; ++t) fs.push_back(render(p, t));

  SequenceProblem out;
  out.program = p;
  out.question.assign(fs.begin(), fs.begin() + kQuestionFrames);
  for (int t = 1; t <= kQuestionFrames; ++t) out.labels.push_back(labels16(p, t));

  const Frame& answer = fs[kQuestionFrames];           // frame 6
  const Frame& copy_last = fs[kQuestionFrames - 1];    // frame 5
  const Frame& over_applied = fs[kQuestionFrames + 1]; // frame 7

  int difficulty = 0;
  for (const Component& c : p.components)
    if (!c.rules.empty()) ++difficulty;
  difficulty = std::min(3, std::max(1, difficulty));

  auto collides = [](const Frame& f, const std::vector<Frame>& others) {
    return std::any_of(others.begin(), others.end(), [&](const Frame& o) { return f == o; });
  };

  std::vector<Frame> chosen{answer, copy_last, over_applied};

  // Distractor (b): shuffle all one-parameter rule perturbations, keep the
  // first whose answer frame is new. Enumeration makes a collision failure
  // mean "no effective perturbation exists", not "unlucky draws".
  std::vector<TransformProgram> options = perturbation_candidates(p);
  for (std::size_t i = options.size(); i > 1; --i)
    std::swap(options[i - 1], options[rng.uniform_int(i)]);
  bool ok = false;
  Frame perturbed;
  for (const TransformProgram& q : options) {
    perturbed = render(q, kQuestionFrames + 1);
    if (!collides(perturbed, chosen)) {
      ok = true;
      break;
    }
  }
  if (!ok) throw DataError("render_problem: perturbed distractor keeps colliding");
  chosen.push_back(perturbed);

  Frame foreign;
  ok = false;
  for (int retry = 0; retry < 10 && !ok; ++retry) {
    foreign = render(sample_program(rng, difficulty), kQuestionFrames + 1);
    ok = !collides(foreign, chosen);
  }
  if (!ok) throw DataError("render_problem: foreign distractor keeps colliding");
  chosen.push_back(foreign);

  // chosen = [answer, copy-last, over-applied, perturbed, foreign]; shuffle.
  std::array<int, kCandidateCount> order = {0, 1, 2, 3, 4};
  for (int i = kCandidateCount - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
  out.candidates.resize(kCandidateCount);
  for (int i = 0; i < kCandidateCount; ++i) {
    out.candidates[static_cast<std::size_t>(i)] = chosen[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    if (order[static_cast<std::size_t>(i)] == 0) out.answer_index = i;
  }
  return out;
}

SequenceProblem augment(const SequenceProblem& p, Dihedral g) {
  SequenceProblem out;
  out.id = p.id;
  out.answer_index = p.answer_index;
  out.program = p.program;
  out.aug = compose(g, p.aug);
  for (const Frame& f : p.question) out.question.push_back(apply_dihedral(f, g));
  for (const Frame& f : p.candidates) out.candidates.push_back(apply_dihedral(f, g));
  for (int t = 1; t <= kQuestionFrames; ++t) out.labels.push_back(labels16(p.program, t, out.aug));
  return out;
}

// ---- moving sprites ----------------------------------------------------------

namespace {

// 8x8 glyph bitmaps, one byte per row, MSB = leftmost pixel.
constexpr std::uint8_t kGlyphs[4][8] = {
    {0xff, 0x81, 0x81, 0x81, 0x81, 0x81, 0x81, 0xff},  // box
    {0x18, 0x18, 0x18, 0xff, 0xff, 0x18, 0x18, 0x18},  // cross
    {0x03, 0x07, 0x0e, 0x1c, 0x38, 0x70, 0xe0, 0xc0},  // slash
    {0xc0, 0xc0, 0xc0, 0xc0, 0xc0, 0xc0, 0xff, 0xff},  // hook
};

int reflect(int pos, int lo, int hi, int& v) {
  if (pos < lo) {
    v = -v;
    return 2 * lo - pos;
  }
  if (pos > hi) {
    v = -v;
    return 2 * hi - pos;
  }
  return pos;
}

}  // namespace

MovingSpriteVideo gen_moving_sprites(Rng& rng, const SpriteConfig& cfg) {
  MovingSpriteVideo out;
  const int limit = static_cast<int>(cfg.extent) - cfg.sprite_size;
  const int n =
      cfg.min_sprites + static_cast<int>(rng.uniform_int(
                            static_cast<std::uint64_t>(cfg.max_sprites - cfg.min_sprites + 1)));
  auto velocity = [&rng]() {
    static constexpr int v[4] = {-2, -1, 1, 2};
    return v[rng.uniform_int(4)];
  };
  std::vector<Sprite> sprites;
  for (int i = 0; i < n; ++i)
    sprites.push_back(Sprite{static_cast<int>(rng.uniform_int(4)),
                             static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(limit + 1))),
                             static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(limit + 1))),
                             velocity(), velocity()});
  out.initial = sprites;

  for (int t = 0; t < cfg.frames; ++t) {
    Frame f(cfg.extent, cfg.extent, 0.0);
    for (const Sprite& s : sprites) {
      const auto& glyph = kGlyphs[s.glyph];
      for (int gy = 0; gy < cfg.sprite_size; ++gy)
        for (int gx = 0; gx < cfg.sprite_size; ++gx)
          if (glyph[gy] & (0x80u >> gx))
            f.set(static_cast<std::size_t>(s.y + gy), static_cast<std::size_t>(s.x + gx), 1.0);
    }
    out.frames.push_back(std::move(f));
    for (Sprite& s : sprites) {
      s.x = reflect(s.x + s.vx, 0, limit, s.vx);
      s.y = reflect(s.y + s.vy, 0, limit, s.vy);
    }
  }
  return out;
}

// ---- program text encoding -----------------------------------------------------

std::string encode_program(const TransformProgram& p, Dihedral aug) {
  std::ostringstream os;
  os << "g" << (aug.rot + (aug.mirror ? 4 : 0));
  for (const Component& c : p.components) {
    os << ";c" << c.slot << "." << c.alt_slot << "." << static_cast<int>(c.shape) << "."
       << c.count << "." << c.orient << "." << c.variant << "." << (c.filled ? 1 : 0);
    for (const Rule& r : c.rules)
      os << "+r" << static_cast<int>(r.kind) << "." << r.param << "." << r.every;
  }
  return os.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::vector<int> parse_ints(const std::string& body, char sep, const std::string& what) {
  std::vector<int> out;
  for (const std::string& tok : split(body, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError("bad program descriptor (" + what + "): '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

std::pair<TransformProgram, Dihedral> parse_program(const std::string& text) {
  const std::vector<std::string> parts = split(text, ';');
  if (parts.empty() || parts[0].size() < 2 || parts[0][0] != 'g')
    throw DataError("bad program descriptor: missing augmentation tag in '" + text + "'");
  const std::vector<int> gi = parse_ints(parts[0].substr(1), '.', "aug");
  if (gi.size() != 1 || gi[0] < 0 || gi[0] > 7)
    throw DataError("bad program descriptor: augmentation out of range in '" + text + "'");

  TransformProgram p;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::vector<std::string> segs = split(parts[i], '+');
    if (segs.empty() || segs[0].empty() || segs[0][0] != 'c')
      throw DataError("bad program descriptor: component expected in '" + parts[i] + "'");
    const std::vector<int> f = parse_ints(segs[0].substr(1), '.', "component");
    if (f.size() != 7) throw DataError("bad program descriptor: component needs 7 fields");
    Component c;
    c.slot = f[0];
    c.alt_slot = f[1];
    c.shape = static_cast<ShapeKind>(f[2]);
    c.count = f[3];
    c.orient = f[4];
    c.variant = f[5];
    c.filled = f[6] != 0;
    if (c.slot < 0 || c.slot > 8 || c.alt_slot < 0 || c.alt_slot > 8 || f[2] < 0 || f[2] > 3)
      throw DataError("bad program descriptor: component fields out of range");
    for (std::size_t r = 1; r < segs.size(); ++r) {
      if (segs[r].empty() || segs[r][0] != 'r')
        throw DataError("bad program descriptor: rule expected in '" + segs[r] + "'");
      const std::vector<int> rf = parse_ints(segs[r].substr(1), '.', "rule");
      if (rf.size() != 3 || rf[0] < 0 || rf[0] > 4 || rf[2] < 1)
        throw DataError("bad program descriptor: rule fields out of range");
      c.rules.push_back(Rule{static_cast<RuleKind>(rf[0]), rf[1], rf[2]});
    }
    p.components.push_back(std::move(c));
  }
  return {std::move(p), dihedral_element(gi[0])};
}

// ---- dataset IO -----------------------------------------------------------------

namespace fs = std::filesystem;

void write_problems(const fs::path& dir, const std::vector<SequenceProblem>& ps) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  for (const SequenceProblem& p : ps) {
    manifest << p.id << "\t" << p.question.size() << "\t" << p.candidates.size() << "\t"
             << p.answer_index << "\t" << encode_program(p.program, p.aug) << "\n";
    for (std::size_t t = 0; t < p.question.size(); ++t)
      write_pgm(dir / (std::to_string(p.id) + "_q" + std::to_string(t + 1) + ".pgm"),
                p.question[t]);
    for (std::size_t k = 0; k < p.candidates.size(); ++k)
      write_pgm(dir / (std::to_string(p.id) + "_c" + std::to_string(k) + ".pgm"),
                p.candidates[k]);
  }
  if (!manifest) throw DataError("short manifest write in " + dir.string());
}

std::vector<SequenceProblem> read_problems(const fs::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("missing manifest: " + (dir / "manifest.txt").string());
  std::vector<SequenceProblem> out;
  std::string line;
  for (int lineno = 1; std::getline(manifest, line); ++lineno) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 5)
      throw DataError("manifest.txt line " + std::to_string(lineno) + ": expected 5 fields, got " +
                      std::to_string(fields.size()));
    SequenceProblem p;
    int t_count, k_count;
    try {
      p.id = std::stoull(fields[0]);
      t_count = std::stoi(fields[1]);
      k_count = std::stoi(fields[2]);
      p.answer_index = std::stoi(fields[3]);
    } catch (const std::exception&) {
      throw DataError("manifest.txt line " + std::to_string(lineno) + ": malformed numbers");
    }
    if (t_count <= 0 || k_count <= 0 || p.answer_index < 0 || p.answer_index >= k_count)
      throw DataError("manifest.txt line " + std::to_string(lineno) + ": counts out of range");
    auto [program, aug] = parse_program(fields[4]);
    p.program = std::move(program);
    p.aug = aug;
    for (int t = 1; t <= t_count; ++t) {
      p.question.push_back(read_pgm(dir / (fields[0] + "_q" + std::to_string(t) + ".pgm")));
      p.labels.push_back(labels16(p.program, t, p.aug));
    }
    for (int k = 0; k < k_count; ++k)
      p.candidates.push_back(read_pgm(dir / (fields[0] + "_c" + std::to_string(k) + ".pgm")));
    out.push_back(std::move(p));
  }
  return out;
}

void write_videos(const fs::path& dir, const std::vector<MovingSpriteVideo>& vs) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  for (const MovingSpriteVideo& v : vs) {
    manifest << v.id << "\t" << v.frames.size() << "\n";
    for (std::size_t t = 0; t < v.frames.size(); ++t)
      write_pgm(dir / (std::to_string(v.id) + "_f" + std::to_string(t + 1) + ".pgm"), v.frames[t]);
  }
  if (!manifest) throw DataError("short manifest write in " + dir.string());
}

std::vector<MovingSpriteVideo> read_videos(const fs::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("missing manifest: " + (dir / "manifest.txt").string());
  std::vector<MovingSpriteVideo> out;
  std::string line;
  for (int lineno = 1; std::getline(manifest, line); ++lineno) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 2)
      throw DataError("manifest.txt line " + std::to_string(lineno) + ": expected 2 fields, got " +
                      std::to_string(fields.size()));
    MovingSpriteVideo v;
    int frames;
    try {
      v.id = std::stoull(fields[0]);
      frames = std::stoi(fields[1]);
    } catch (const std::exception&) {
      throw DataError("manifest.txt line " + std::to_string(lineno) + ": malformed numbers");
    }
    if (frames <= 0)
      throw DataError("manifest.txt line " + std::to_string(lineno) + ": bad frame count");
    for (int t = 1; t <= frames; ++t)
      v.frames.push_back(read_pgm(dir / (fields[0] + "_f" + std::to_string(t) + ".pgm")));
    out.push_back(std::move(v));
  }
  return out;
}

// ---- bulk generation --------------------------------------------------------------

std::vector<SequenceProblem> generate_problems(std::uint64_t seed, std::size_t base_count,
                                               int difficulty, bool augment8) {
  const std::size_t per_base = augment8 ? 8 : 1;
  std::vector<SequenceProblem> out(base_count * per_base);
  const Rng root(seed);
  parallel_for(base_count, [&](std::size_t b) {
    Rng stream = root.stream(b);
    SequenceProblem base = render_problem(sample_program(stream, difficulty), stream);
    for (std::size_t g = 0; g < per_base; ++g) {
      SequenceProblem p = g == 0 ? base : augment(base, dihedral_element(static_cast<int>(g)));
      p.id = b * per_base + g;
      out[b * per_base + g] = std::move(p);
    }
  });
  return out;
}

std::vector<MovingSpriteVideo> generate_videos(std::uint64_t seed, std::size_t count,
                                               const SpriteConfig& cfg) {
  std::vector<MovingSpriteVideo> out(count);
  const Rng root(seed);
  parallel_for(count, [&](std::size_t i) {
    Rng stream = root.stream(i);
    MovingSpriteVideo v = gen_moving_sprites(stream, cfg);
    v.id = i;
    out[i] = std::move(v);
  });
  return out;
}

}  // namespace seqadv::datagen
