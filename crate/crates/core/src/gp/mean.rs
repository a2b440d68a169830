use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeanFunction<T> {
    Zero,
    Constant(T),
}

impl<T: Real> MeanFunction<T> {
    #[inline]
    pub fn eval(&self, _x: &[T]) -> T {
        match *self {
            MeanFunction::Zero => T::zero(),
            MeanFunction::Constant(c) => c,
        }
    }

    pub fn shifted(&self, c: T) -> Self {
        MeanFunction::Constant(self.eval(&[]) + c)
    }
}
