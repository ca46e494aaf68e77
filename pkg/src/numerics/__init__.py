# Dense linear algebra kernel
