//! Rasterized head and wrist observations.
//!
//! Both views are 16x16 grids of palette codes. The head view covers the
//! whole table at 16 cells per unit. The wrist view samples the table at
//! four times that resolution and keeps the 16x16 window centred on the
//! gripper's cell; cells that fall off the table are coded 0.

use serde::{Deserialize, Serialize};

use super::state::{planar_distance, WorldState, OBJECT_RADIUS};
use super::WorldError;

pub const RASTER_SIDE: usize = 16;
pub const RASTER_CELLS: usize = RASTER_SIDE * RASTER_SIDE;
pub const WRIST_ZOOM: usize = 4;

pub const CODE_EMPTY: u8 = 0;
pub const CODE_GRIPPER_OPEN: u8 = 32;
pub const CODE_GRIPPER_CLOSED: u8 = 33;
pub const CODE_PLATE: u8 = 34;
/// Every code is below this bound; it also normalizes raster features.
pub const PALETTE_SLOTS: usize = 64;

pub fn is_declared_code(code: u8) -> bool {
    matches!(code, 0..=8 | 16..=31 | 32..=34)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum View {
    Head = 0,
    Wrist = 1,
}

impl View {
    pub const ALL: [View; 2] = [View::Head, View::Wrist];

    pub fn from_id(id: u8) -> Option<View> {
        match id {
            0 => Some(View::Head),
            1 => Some(View::Wrist),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Raster {
    pub view: View,
    pub cells: [u8; RASTER_CELLS],
}

impl Raster {
    pub fn filled(view: View, code: u8) -> Self {
        Raster { view, cells: [code; RASTER_CELLS] }
    }

    pub fn from_cells(view: View, cells: &[u8]) -> Result<Self, WorldError> {
        if cells.len() != RASTER_CELLS {
            return Err(WorldError::InvalidRaster(format!(
                "expected {RASTER_CELLS} cells, got {}",
                cells.len()
            )));
        }
        if let Some((i, &c)) = cells.iter().enumerate().find(|(_, &c)| !is_declared_code(c)) {
            return Err(WorldError::InvalidRaster(format!(
                "cell {i} holds undeclared palette code {c}"
            )));
        }
        let mut out = [0u8; RASTER_CELLS];
        out.copy_from_slice(cells);
        Ok(Raster { view, cells: out })
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * RASTER_SIDE + col]
    }

    pub fn mismatches(&self, other: &Raster) -> usize {
        self.cells.iter().zip(other.cells.iter()).filter(|(a, b)| a != b).count()
    }
}

/// Observation pair in the fixed `[head, wrist]` order.
pub type Observation = [Raster; 2];

fn cell_of(v: f32, resolution: usize) -> i64 {
    ((v * resolution as f32).floor() as i64).clamp(0, resolution as i64 - 1)
}

fn paint_view(state: &WorldState, resolution: usize, origin: (i64, i64)) -> [u8; RASTER_CELLS] {
    let mut cells = [CODE_EMPTY; RASTER_CELLS];
    let res = resolution as i64;
    let size = 1.0 / resolution as f32;
    let gx = cell_of(state.gripper_pose[0], resolution);
    let gy = cell_of(state.gripper_pose[1], resolution);
    for r in 0..RASTER_SIDE {
        for c in 0..RASTER_SIDE {
            let grow = origin.0 + r as i64;
            let gcol = origin.1 + c as i64;
            if !(0..res).contains(&grow) || !(0..res).contains(&gcol) {
                continue;
            }
            let centre = [(gcol as f32 + 0.5) * size, (grow as f32 + 0.5) * size];
            let covers = |p: [f32; 2], radius: f32| {
                planar_distance(centre, p) <= radius
                    || (cell_of(p[0], resolution) == gcol && cell_of(p[1], resolution) == grow)
            };
            let mut code = state.tablecloth;
            if let Some(plate) = &state.plate {
                if covers(plate.center, plate.radius) {
                    code = CODE_PLATE;
                }
            }
            for o in &state.objects {
                if covers(o.center, OBJECT_RADIUS) {
                    code = o.code;
                }
            }
            if gcol == gx && grow == gy {
                code = if super::state::is_open(state.gripper_open) {
                    CODE_GRIPPER_OPEN
                } else {
                    CODE_GRIPPER_CLOSED
                };
            }
            cells[r * RASTER_SIDE + c] = code;
        }
    }
    cells
}

/// Renders the `[head, wrist]` pair for a state. Pure and deterministic.
pub fn render(state: &WorldState) -> Observation {
    let head = paint_view(state, RASTER_SIDE, (0, 0));
    let fine = RASTER_SIDE * WRIST_ZOOM;
    let half = (RASTER_SIDE / 2) as i64;
    let origin = (
        cell_of(state.gripper_pose[1], fine) - half,
        cell_of(state.gripper_pose[0], fine) - half,
    );
    let wrist = paint_view(state, fine, origin);
    [Raster { view: View::Head, cells: head }, Raster { view: View::Wrist, cells: wrist }]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::state::{Plate, TableObject, PLATE_RADIUS};

    fn empty_state() -> WorldState {
        WorldState {
            gripper_pose: [0.5, 0.5, 0.5],
            gripper_open: 1.0,
            objects: vec![],
            plate: None,
            tablecloth: 1,
            step_index: 0,
            rng_seed: 0,
        }
    }

    #[test]
    fn empty_table_is_tablecloth_except_the_gripper_cell() {
        let [head, _] = render(&empty_state());
        for (i, &c) in head.cells.iter().enumerate() {
            if i == 8 * RASTER_SIDE + 8 {
                assert_eq!(c, CODE_GRIPPER_OPEN);
            } else {
                assert_eq!(c, 1);
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut s = empty_state();
        s.objects.push(TableObject { id: 0, code: 20, center: [0.2, 0.3], held: false });
        s.plate = Some(Plate { center: [0.7, 0.7], radius: PLATE_RADIUS });
        assert_eq!(render(&s), render(&s.clone()));
    }

    #[test]
    fn marker_paints_over_objects_and_closed_marker_differs() {
        let mut s = empty_state();
        s.objects.push(TableObject { id: 0, code: 20, center: [0.53, 0.53], held: false });
        s.gripper_open = 0.2;
        let [head, wrist] = render(&s);
        assert_eq!(head.get(8, 8), CODE_GRIPPER_CLOSED);
        assert_eq!(wrist.get(8, 8), CODE_GRIPPER_CLOSED);
        assert!(wrist.cells.contains(&20));
    }

    #[test]
    fn wrist_view_codes_off_table_cells_as_empty() {
        let mut s = empty_state();
        s.gripper_pose = [0.0, 0.0, 0.5];
        let [_, wrist] = render(&s);
        assert_eq!(wrist.get(0, 0), CODE_EMPTY);
        assert_eq!(wrist.get(7, 7), CODE_EMPTY);
        assert_eq!(wrist.get(8, 8), CODE_GRIPPER_OPEN);
        assert_eq!(wrist.get(9, 9), 1);
    }

    #[test]
    fn plate_disk_covers_a_three_by_three_block_at_a_cell_centre() {
        let mut s = empty_state();
        s.gripper_pose = [0.05, 0.05, 0.5];
        s.plate = Some(Plate { center: [8.5 / 16.0, 11.5 / 16.0], radius: PLATE_RADIUS });
        let [head, _] = render(&s);
        let plate_cells = head.cells.iter().filter(|&&c| c == CODE_PLATE).count();
        assert_eq!(plate_cells, 9);
    }

    #[test]
    fn raster_construction_rejects_undeclared_codes() {
        let mut cells = vec![1u8; RASTER_CELLS];
        cells[3] = 12;
        assert!(Raster::from_cells(View::Head, &cells).is_err());
        assert!(Raster::from_cells(View::Head, &cells[..10]).is_err());
    }
}
