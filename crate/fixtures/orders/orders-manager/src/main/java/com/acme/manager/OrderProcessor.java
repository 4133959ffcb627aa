package com.acme.manager;

import com.acme.models.OrderModel;
import org.springframework.data.mongodb.core.MongoTemplate;
import org.springframework.kafka.annotation.KafkaListener;
import org.springframework.stereotype.Service;

/**
 * Consumes queued orders, validates them and stores them.
 */
@Service
public class OrderProcessor {
    private final MongoTemplate store;
    private OrderModel current;

    public OrderProcessor(MongoTemplate store) {
        this.store = store;
    }

    @KafkaListener(topics = "orders")
    public void process(OrderModel order) {
        current = order;
        store.save(order);
    }
}
