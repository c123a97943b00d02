from gibbslab._tuning import tune_allocator

tune_allocator()
