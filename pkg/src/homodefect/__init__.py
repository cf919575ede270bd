"""homodefect: homogenization of periodic coefficients with a localized defect."""
