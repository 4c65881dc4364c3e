//! Minimal raster plotting: axes, markers, polylines and bars on an RGB canvas.

use image::{Rgb, RgbImage};

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
pub const GREY: Rgb<u8> = Rgb([200, 200, 200]);
pub const RED: Rgb<u8> = Rgb([214, 39, 40]);
pub const BLUE: Rgb<u8> = Rgb([31, 119, 180]);
pub const GREEN: Rgb<u8> = Rgb([44, 160, 44]);
pub const ORANGE: Rgb<u8> = Rgb([255, 127, 14]);
pub const PURPLE: Rgb<u8> = Rgb([148, 103, 189]);

/// A plotting area inside an image, mapping data coordinates to pixels.
#[derive(Clone, Copy, Debug)]
pub struct Panel {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Panel {
    pub fn new(x0: u32, y0: u32, width: u32, height: u32, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Panel { x0, y0, width, height, x_range, y_range }
    }

    fn px(&self, x: f64) -> i64 {
        let t = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        self.x0 as i64 + (t * (self.width - 1) as f64).round() as i64
    }

    fn py(&self, y: f64) -> i64 {
        let t = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (self.y0 + self.height - 1) as i64 - (t * (self.height - 1) as f64).round() as i64
    }

    /// Frame plus light grid lines at every quarter of each axis.
    pub fn axes(&self, img: &mut RgbImage) {
        for q in 1..4 {
            let fx = self.x_range.0 + (self.x_range.1 - self.x_range.0) * q as f64 / 4.0;
            let fy = self.y_range.0 + (self.y_range.1 - self.y_range.0) * q as f64 / 4.0;
            self.line(img, (fx, self.y_range.0), (fx, self.y_range.1), GREY);
            self.line(img, (self.x_range.0, fy), (self.x_range.1, fy), GREY);
        }
        let (l, r, t, b) = (self.x0, self.x0 + self.width - 1, self.y0, self.y0 + self.height - 1);
        for x in l..=r {
            put(img, x as i64, t as i64, BLACK);
            put(img, x as i64, b as i64, BLACK);
        }
        for y in t..=b {
            put(img, l as i64, y as i64, BLACK);
            put(img, r as i64, y as i64, BLACK);
        }
    }

    /// Filled square marker of half-width `r` pixels.
    pub fn point(&self, img: &mut RgbImage, x: f64, y: f64, r: i64, color: Rgb<u8>) {
        let (cx, cy) = (self.px(x), self.py(y));
        for dy in -r..=r {
            for dx in -r..=r {
                self.put_inside(img, cx + dx, cy + dy, color);
            }
        }
    }

    pub fn line(&self, img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
        let (mut x, mut y) = (self.px(a.0), self.py(a.1));
        let (x1, y1) = (self.px(b.0), self.py(b.1));
        let (dx, dy) = ((x1 - x).abs(), -(y1 - y).abs());
        let (sx, sy) = (if x < x1 { 1 } else { -1 }, if y < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.put_inside(img, x, y, color);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn polyline(&self, img: &mut RgbImage, pts: &[(f64, f64)], color: Rgb<u8>) {
        for w in pts.windows(2) {
            self.line(img, w[0], w[1], color);
        }
        for &(x, y) in pts {
            self.point(img, x, y, 2, color);
        }
    }

    /// Vertical bars of equal width spanning the x range; heights in data units.
    pub fn bars(&self, img: &mut RgbImage, heights: &[f64], color: Rgb<u8>) {
        let n = heights.len() as f64;
        let span = self.x_range.1 - self.x_range.0;
        for (i, &h) in heights.iter().enumerate() {
            let left = self.px(self.x_range.0 + span * i as f64 / n) + 1;
            let right = self.px(self.x_range.0 + span * (i + 1) as f64 / n) - 1;
            let top = self.py(h.min(self.y_range.1));
            let bottom = self.py(self.y_range.0);
            for x in left..=right {
                for y in top..=bottom {
                    self.put_inside(img, x, y, color);
                }
            }
        }
    }

    fn put_inside(&self, img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
        let inside = x >= self.x0 as i64
            && x < (self.x0 + self.width) as i64
            && y >= self.y0 as i64
            && y < (self.y0 + self.height) as i64;
        if inside {
            put(img, x, y, color);
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

pub fn canvas(width: u32, height: u32) -> RgbImage {
    RgbImage::from_pixel(width, height, WHITE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_map_to_panel_edges() {
        let p = Panel::new(10, 20, 101, 51, (0.0, 100.0), (0.0, 50.0));
        assert_eq!((p.px(0.0), p.px(100.0)), (10, 110));
        assert_eq!((p.py(0.0), p.py(50.0)), (70, 20));
    }

    #[test]
    fn drawing_stays_inside_the_panel() {
        let mut img = canvas(50, 50);
        let p = Panel::new(10, 10, 20, 20, (0.0, 1.0), (0.0, 1.0));
        p.point(&mut img, 1.0, 1.0, 5, RED);
        p.line(&mut img, (-1.0, -1.0), (2.0, 2.0), BLUE);
        p.bars(&mut img, &[0.5, 2.0], GREEN);
        for (x, y, px) in img.enumerate_pixels() {
            if !(10..30).contains(&x) || !(10..30).contains(&y) {
                assert_eq!(*px, WHITE, "pixel ({x},{y}) drawn outside");
            }
        }
    }
}
