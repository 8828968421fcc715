use dressswap::dataset::{LandmarkSet, LANDMARK_COUNT};
use dressswap::image_io::ImageRgb;

/// One color per landmark, in landmark order.
pub const COLORS: [[u8; 3]; LANDMARK_COUNT] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [145, 30, 180],
    [70, 240, 240],
    [245, 130, 48],
    [240, 50, 230],
];

/// Draws a 3×3 square centred on the pixel containing each landmark,
/// clipped to the image. Later landmarks paint over earlier ones.
pub fn draw_landmarks(image: &mut ImageRgb, landmarks: &LandmarkSet) {
    let (w, h) = (image.width() as i64, image.height() as i64);
    for (p, color) in landmarks.points().iter().zip(COLORS) {
        let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
        for y in (cy - 1).max(0)..=(cy + 1).min(h - 1) {
            for x in (cx - 1).max(0)..=(cx + 1).min(w - 1) {
                image.set_pixel(x as usize, y as usize, color);
            }
        }
    }
}
