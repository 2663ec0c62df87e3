//! Procedural 2.5D indoor scenes: grid walls plus colored cylindrical object
//! billboards on a fixed category palette.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::world::pose::Pose2D;
use rand::Rng as _;
use std::fmt::Write as _;
use std::path::Path;

/// Billboard cylinder radius in meters, shared by all categories.
pub const OBJECT_RADIUS: f64 = 0.2;

/// Fixed two-tone wall shading by face axis plus floor/ceiling constants.
pub const WALL_TONE_X: [u8; 3] = [160, 160, 160];
pub const WALL_TONE_Y: [u8; 3] = [110, 110, 110];
pub const FLOOR_COLOR: [u8; 3] = [40, 40, 40];
pub const CEILING_COLOR: [u8; 3] = [70, 70, 70];
/// Reserved for the auxiliary bounding-box overlay; never a category color.
pub const BBOX_RED: [u8; 3] = [255, 0, 0];

/// Category palette: color and apparent-height fraction. Colors are pairwise
/// separated by at least 64 per-channel distance, and by at least 64 from the
/// wall tones, floor, ceiling and the reserved red.
pub const PALETTE: [([u8; 3], f64); 16] = [
    ([0, 0, 255], 1.0),
    ([0, 255, 0], 0.8),
    ([0, 255, 255], 0.6),
    ([255, 0, 255], 0.9),
    ([255, 255, 0], 0.7),
    ([128, 0, 255], 1.0),
    ([255, 128, 0], 0.5),
    ([0, 128, 255], 0.8),
    ([128, 255, 0], 0.6),
    ([0, 255, 128], 1.0),
    ([255, 0, 128], 0.7),
    ([128, 0, 128], 0.9),
    ([0, 0, 128], 0.8),
    ([0, 128, 0], 0.6),
    ([128, 128, 0], 1.0),
    ([0, 128, 128], 0.7),
];

pub fn category_color(category: usize) -> [u8; 3] {
    PALETTE[category].0
}

pub fn category_height(category: usize) -> f64 {
    PALETTE[category].1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectSpec {
    /// Index into [`PALETTE`].
    pub category: usize,
    pub x: f64,
    pub y: f64,
    /// Apparent-height fraction in (0, 1].
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Row-major occupancy, `true` = wall. Cell (cx, cy) covers
    /// `[cx, cx+1) x [cy, cy+1)` meters.
    pub grid: Vec<bool>,
    pub objects: Vec<ObjectSpec>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn is_wall(&self, cx: i64, cy: i64) -> bool {
        if cx < 0 || cy < 0 || cx >= self.width as i64 || cy >= self.height as i64 {
            return true;
        }
        self.grid[cy as usize * self.width + cx as usize]
    }

    pub fn in_free_space(&self, x: f64, y: f64) -> bool {
        !self.is_wall(x.floor() as i64, y.floor() as i64)
    }

    pub fn pose_in_free_space(&self, pose: &Pose2D) -> bool {
        self.in_free_space(pose.x, pose.y)
    }

    /// All free cells reachable from the first free cell; used by the
    /// connectivity invariant.
    pub fn connected(&self) -> bool {
        let free: Vec<usize> =
            (0..self.grid.len()).filter(|&i| !self.grid[i]).collect();
        if free.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.grid.len()];
        let mut stack = vec![free[0]];
        seen[free[0]] = true;
        let w = self.width as i64;
        while let Some(i) = stack.pop() {
            let (cx, cy) = ((i % self.width) as i64, (i / self.width) as i64);
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (cx + dx, cy + dy);
                if !self.is_wall(nx, ny) {
                    let ni = (ny * w + nx) as usize;
                    if !seen[ni] {
                        seen[ni] = true;
                        stack.push(ni);
                    }
                }
            }
        }
        free.iter().all(|&i| seen[i])
    }

    pub fn validate(&self) -> Result<()> {
        for cx in 0..self.width {
            if !self.grid[cx] || !self.grid[(self.height - 1) * self.width + cx] {
                return Err(Error::Geometry("outer boundary must be fully walled".into()));
            }
        }
        for cy in 0..self.height {
            if !self.grid[cy * self.width] || !self.grid[cy * self.width + self.width - 1] {
                return Err(Error::Geometry("outer boundary must be fully walled".into()));
            }
        }
        if !self.connected() {
            return Err(Error::Geometry("free cells are not one connected component".into()));
        }
        let mut cells = std::collections::HashSet::new();
        for o in &self.objects {
            if o.category >= PALETTE.len() {
                return Err(Error::Geometry(format!("unknown category {}", o.category)));
            }
            if !(o.height > 0.0 && o.height <= 1.0) {
                return Err(Error::Geometry(format!("height fraction {} out of (0,1]", o.height)));
            }
            let cell = (o.x.floor() as i64, o.y.floor() as i64);
            if self.is_wall(cell.0, cell.1) {
                return Err(Error::Geometry("object must occupy a free cell".into()));
            }
            if !cells.insert(cell) {
                return Err(Error::Geometry("two objects share a cell".into()));
            }
        }
        Ok(())
    }
}

/// Deterministic scene generation: boundary walls, a few interior wall runs
/// kept only when connectivity survives, then objects with distinct
/// categories jittered inside free cells away from walls.
pub fn generate_scene(
    rng: &mut Rng,
    seed: u64,
    width: usize,
    height: usize,
    n_objects: usize,
) -> Result<SceneSpec> {
    if width < 8 || height < 8 {
        return Err(Error::InvalidArgument(format!(
            "scene must be at least 8x8 cells, got {width}x{height}"
        )));
    }
    if n_objects < 1 || n_objects > PALETTE.len() {
        return Err(Error::InvalidArgument(format!(
            "n_objects must be in [1, {}], got {n_objects}",
            PALETTE.len()
        )));
    }
    let mut grid = vec![false; width * height];
    for cx in 0..width {
        grid[cx] = true;
        grid[(height - 1) * width + cx] = true;
    }
    for cy in 0..height {
        grid[cy * width] = true;
        grid[cy * width + width - 1] = true;
    }
    let mut scene = SceneSpec { width, height, grid, objects: Vec::new(), seed };

    // Interior walls: short runs, kept only if the free space stays connected.
    let n_runs = (width * height) / 24;
    for _ in 0..n_runs {
        let cx = rng.gen_range(2..width - 2);
        let cy = rng.gen_range(2..height - 2);
        let horizontal = rng.gen_bool(0.5);
        let len = rng.gen_range(2..=4usize);
        let cells: Vec<usize> = (0..len)
            .filter_map(|i| {
                let (x, y) = if horizontal { (cx + i, cy) } else { (cx, cy + i) };
                (x < width - 1 && y < height - 1).then(|| y * width + x)
            })
            .collect();
        let saved = scene.grid.clone();
        for &c in &cells {
            scene.grid[c] = true;
        }
        let free_count = scene.grid.iter().filter(|&&w| !w).count();
        if free_count == 0 || !scene.connected() {
            scene.grid = saved;
        }
    }

    // Objects: distinct categories, deterministic shuffled order.
    let mut categories: Vec<usize> = (0..PALETTE.len()).collect();
    for i in (1..categories.len()).rev() {
        categories.swap(i, rng.gen_range(0..=i));
    }
    let mut used_cells = std::collections::HashSet::new();
    for &category in categories.iter().take(n_objects) {
        let mut placed = false;
        for _ in 0..256 {
            let cx = rng.gen_range(1..width - 1);
            let cy = rng.gen_range(1..height - 1);
            if scene.grid[cy * width + cx] || used_cells.contains(&(cx, cy)) {
                continue;
            }
            let x = cx as f64 + 0.5 + rng.gen_range(-0.15..0.15);
            let y = cy as f64 + 0.5 + rng.gen_range(-0.15..0.15);
            scene.objects.push(ObjectSpec { category, x, y, height: category_height(category) });
            used_cells.insert((cx, cy));
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Geometry(format!(
                "could not place object after bounded retries in {width}x{height} scene"
            )));
        }
    }
    scene.validate()?;
    Ok(scene)
}

/// Text format: header `W H n_objects seed`, grid rows of `#`/`.`, then one
/// `category x y height` line per object.
pub fn scene_to_string(scene: &SceneSpec) -> String {
    let mut s = String::new();
    writeln!(s, "{} {} {} {}", scene.width, scene.height, scene.objects.len(), scene.seed).unwrap();
    for cy in 0..scene.height {
        for cx in 0..scene.width {
            s.push(if scene.grid[cy * scene.width + cx] { '#' } else { '.' });
        }
        s.push('\n');
    }
    for o in &scene.objects {
        writeln!(s, "{} {} {} {}", o.category, o.x, o.y, o.height).unwrap();
    }
    s
}

pub fn scene_from_str(text: &str) -> Result<SceneSpec> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty scene file".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(Error::Format(format!("scene header must be 'W H n_objects seed', got '{header}'")));
    }
    let width: usize = parts[0].parse().map_err(|_| Error::Format("bad width".into()))?;
    let height: usize = parts[1].parse().map_err(|_| Error::Format("bad height".into()))?;
    let n_objects: usize = parts[2].parse().map_err(|_| Error::Format("bad n_objects".into()))?;
    let seed: u64 = parts[3].parse().map_err(|_| Error::Format("bad seed".into()))?;
    let mut grid = Vec::with_capacity(width * height);
    for _ in 0..height {
        let row = lines.next().ok_or_else(|| Error::Format("missing grid row".into()))?;
        if row.chars().count() != width {
            return Err(Error::Format(format!("grid row has {} cells, expected {width}", row.chars().count())));
        }
        for c in row.chars() {
            match c {
                '#' => grid.push(true),
                '.' => grid.push(false),
                other => return Err(Error::Format(format!("bad grid char '{other}'"))),
            }
        }
    }
    let mut objects = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let line = lines.next().ok_or_else(|| Error::Format("missing object line".into()))?;
        let p: Vec<&str> = line.split_whitespace().collect();
        if p.len() != 4 {
            return Err(Error::Format(format!("object line must be 'category x y height', got '{line}'")));
        }
        objects.push(ObjectSpec {
            category: p[0].parse().map_err(|_| Error::Format("bad category".into()))?,
            x: p[1].parse().map_err(|_| Error::Format("bad object x".into()))?,
            y: p[2].parse().map_err(|_| Error::Format("bad object y".into()))?,
            height: p[3].parse().map_err(|_| Error::Format("bad object height".into()))?,
        });
    }
    let scene = SceneSpec { width, height, grid, objects, seed };
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &SceneSpec, path: &Path) -> Result<()> {
    std::fs::write(path, scene_to_string(scene)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_scene(path: &Path) -> Result<SceneSpec> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    scene_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn channel_dist(a: [u8; 3], b: [u8; 3]) -> u8 {
        (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap()
    }

    #[test]
    fn palette_colors_are_distinguishable() {
        let fixed = [WALL_TONE_X, WALL_TONE_Y, FLOOR_COLOR, CEILING_COLOR, BBOX_RED];
        for (i, (ci, _)) in PALETTE.iter().enumerate() {
            for (cj, _) in PALETTE.iter().skip(i + 1) {
                assert!(channel_dist(*ci, *cj) >= 64, "{ci:?} vs {cj:?}");
            }
            for f in fixed {
                assert!(channel_dist(*ci, f) >= 64, "{ci:?} vs fixed {f:?}");
            }
        }
        for (_, h) in PALETTE {
            assert!(h > 0.0 && h <= 1.0);
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let gen = |seed| {
            let mut rng = rng_for(seed, "scene", 0);
            generate_scene(&mut rng, seed, 12, 10, 5).unwrap()
        };
        assert_eq!(gen(33), gen(33));
        assert_ne!(gen(33), gen(34));
    }

    #[test]
    fn zero_objects_rejected() {
        let mut rng = rng_for(0, "scene", 0);
        assert!(generate_scene(&mut rng, 0, 10, 10, 0).is_err());
    }

    #[test]
    fn too_small_rejected() {
        let mut rng = rng_for(0, "scene", 0);
        assert!(generate_scene(&mut rng, 0, 7, 10, 1).is_err());
    }

    #[test]
    fn seed_sweep_passes_connectivity_flood_fill() {
        for seed in 0..100u64 {
            let mut rng = rng_for(seed, "scene", 0);
            let scene = generate_scene(&mut rng, seed, 12, 12, 4).unwrap();
            assert!(scene.connected(), "seed {seed}");
            scene.validate().unwrap();
        }
    }

    #[test]
    fn text_round_trip() {
        let mut rng = rng_for(5, "scene", 0);
        let scene = generate_scene(&mut rng, 5, 14, 9, 6).unwrap();
        let parsed = scene_from_str(&scene_to_string(&scene)).unwrap();
        assert_eq!(scene, parsed);
    }

    #[test]
    fn malformed_scene_rejected() {
        assert!(scene_from_str("").is_err());
        assert!(scene_from_str("4 4 0\n").is_err());
        let mut rng = rng_for(5, "scene", 0);
        let scene = generate_scene(&mut rng, 5, 10, 10, 2).unwrap();
        let mut text = scene_to_string(&scene);
        text = text.replacen('#', "?", 1);
        assert!(scene_from_str(&text).is_err());
    }
}
