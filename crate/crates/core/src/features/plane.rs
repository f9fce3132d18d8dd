use image::GrayImage;

/// A float image that reads a constant background outside its bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub background: f32,
}

impl Plane {
    /// Intensities scaled by `scale` (255 → `255·scale`), background white.
    pub fn from_gray(img: &GrayImage, scale: f32) -> Self {
        Plane {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 * scale).collect(),
            background: 255.0 * scale,
        }
    }

    #[inline]
    pub fn at(&self, x: i32, y: i32) -> f32 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            self.background
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn is_flat(&self) -> bool {
        self.data.iter().all(|&v| v == self.background)
    }

    /// Separable Gaussian blur, background padding.
    pub fn blur(&self, sigma: f32) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as i32;
        let mut kernel: Vec<f32> = (-radius..=radius)
            .map(|d| (-(d * d) as f32 / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f32 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= sum);

        let mut tmp = Plane {
            data: vec![0.0; self.data.len()],
            ..self.clone()
        };
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let v: f32 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * self.at(x + k as i32 - radius, y))
                    .sum();
                tmp.set(x as usize, y as usize, v);
            }
        }
        let mut out = tmp.clone();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let v: f32 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * tmp.at(x, y + k as i32 - radius))
                    .sum();
                out.set(x as usize, y as usize, v);
            }
        }
        out
    }

    /// Keeps every second pixel in both directions.
    /// Bilinear 2x upsampling on pixel centers.
    pub fn double(&self) -> Plane {
        let (width, height) = (self.width * 2, self.height * 2);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = (y as f32 + 0.5) / 2.0 - 0.5;
            let (y0, fy) = (sy.floor() as i32, sy - sy.floor());
            for x in 0..width {
                let sx = (x as f32 + 0.5) / 2.0 - 0.5;
                let (x0, fx) = (sx.floor() as i32, sx - sx.floor());
                let top = self.clamped(x0, y0) * (1.0 - fx) + self.clamped(x0 + 1, y0) * fx;
                let bottom = self.clamped(x0, y0 + 1) * (1.0 - fx) + self.clamped(x0 + 1, y0 + 1) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
        Plane {
            width,
            height,
            data,
            background: self.background,
        }
    }

    fn clamped(&self, x: i32, y: i32) -> f32 {
        let x = x.clamp(0, self.width as i32 - 1) as usize;
        let y = y.clamp(0, self.height as i32 - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn half(&self) -> Plane {
        let width = self.width / 2;
        let height = self.height / 2;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(self.data[2 * y * self.width + 2 * x]);
            }
        }
        Plane {
            width,
            height,
            data,
            background: self.background,
        }
    }

    pub fn sub(&self, other: &Plane) -> Plane {
        Plane {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            background: self.background - other.background,
            ..self.clone()
        }
    }
}
