# Analysis reports
