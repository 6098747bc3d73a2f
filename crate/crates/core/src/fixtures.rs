//! Synthetic scenes of flat-colored disks on a flat background, used by the
//! test suites and the demo CLI.

use crate::image::{ImageBuffer, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Disk {
    pub cx: i64,
    pub cy: i64,
    pub radius: i64,
    pub color: Rgb,
}

impl Disk {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        let (dx, dy) = (x as i64 - self.cx, y as i64 - self.cy);
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Renders `disks` over `background`; later disks paint over earlier ones.
pub fn disk_scene(width: u32, height: u32, background: Rgb, disks: &[Disk]) -> ImageBuffer {
    ImageBuffer::from_fn(width, height, |x, y| {
        disks
            .iter()
            .rev()
            .find(|d| d.contains(x, y))
            .map_or(background, |d| d.color)
    })
    .expect("nonzero dimensions")
}

pub const RED: Rgb = [255, 0, 0];
pub const GREEN: Rgb = [0, 255, 0];
pub const WHITE: Rgb = [255, 255, 255];

/// 64×64 white image with a radius-10 red disk at the center.
pub fn red_disk() -> (ImageBuffer, Disk) {
    let disk = Disk {
        cx: 32,
        cy: 32,
        radius: 10,
        color: RED,
    };
    (disk_scene(64, 64, WHITE, &[disk]), disk)
}

/// 64×64 white image with a red disk on the left and a green disk on the
/// right.
pub fn two_disks() -> (ImageBuffer, [Disk; 2]) {
    let disks = [
        Disk {
            cx: 18,
            cy: 32,
            radius: 10,
            color: RED,
        },
        Disk {
            cx: 46,
            cy: 32,
            radius: 10,
            color: GREEN,
        },
    ];
    (disk_scene(64, 64, WHITE, &disks), disks)
}
